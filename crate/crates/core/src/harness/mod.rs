//! Experiment orchestration: configs, seed sweeps, and the verification suites.

pub mod config;
pub mod criteria;
pub mod sweep;
pub mod verify;

use thiserror::Error;

pub use config::{cell_rng, derive_seed, derive_u64, Algorithm, ExperimentConfig, InstanceSource, SeedSpec};
pub use criteria::{CriterionOutcome, Failure};
pub use sweep::{sweep, write_sweep, Manifest, SweepRow, SweepTable};
pub use verify::{verify, Suite, VerifyReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Mdp(#[from] crate::mdp::MdpError),
    #[error(transparent)]
    Instance(#[from] crate::instances::InstanceError),
    #[error(transparent)]
    Oracle(#[from] crate::oracles::OracleError),
    #[error(transparent)]
    Bounds(#[from] crate::bounds::BoundsError),
    #[error(transparent)]
    Bpi(#[from] crate::bpi::BpiError),
}
