//! Optimistic PAC reinforcement learning for tabular episodic MDPs.
//!
//! - [`mdp`]: the MDP model, exact policy evaluation, planning and simulation.
//! - [`oracles`]: exact gap quantities by enumeration of deterministic policies.
//! - [`bpi`]: the BPI-UCRL best-policy-identification agent and its diagnostics.
//! - [`ucbvi`]: UCBVI regret runs and the regret-to-PAC conversion.
//! - [`bounds`]: closed-form sample-complexity bounds.
//! - [`instances`]: the binary-tree hard instance and random MDPs.
//! - [`harness`]: configs, seeded sweeps, CSV output and verification suites.

// NaN-rejecting checks are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod bpi;
pub mod harness;
pub mod instances;
pub mod mdp;
pub mod mdp_file;
pub mod oracles;
pub mod ucbvi;

pub use bpi::{run, BonusVariant, BpiConfig, RunResult};
pub use instances::{random_mdp, tree_mdp, InstanceError, TreeRewards, TreeSpec};
pub use mdp::{
    evaluate_policy, optimal_values, sample_episode, visitation_probabilities, DeterministicPolicy, Mdp, MdpBuilder,
    MdpError, MdpShape, RewardModel, Trajectory, ValueTable, VisitationTable,
};
pub use oracles::{gap_report, EnumerationBudget, GapReport, OracleError};
