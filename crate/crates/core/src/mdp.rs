//! Tabular, time-inhomogeneous episodic MDPs.
//!
//! Stages are indexed `1..=H` everywhere in the public API. Value tables carry an
//! explicit all-zero row for stage `H + 1`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that transition rows are probability vectors.
pub const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid dimensions: S={states}, A={actions}, H={horizon} (all must be positive)")]
    InvalidDimensions { states: usize, actions: usize, horizon: usize },
    #[error("initial state {0} out of range")]
    InitialStateOutOfRange(usize),
    #[error("empty action mask at stage {h}, state {s}")]
    EmptyMask { h: usize, s: usize },
    #[error("action {a} out of range in mask at stage {h}, state {s}")]
    MaskActionOutOfRange { h: usize, s: usize, a: usize },
    #[error("negative transition probability {value} at stage {h}, state {s}, action {a}, next state {next}")]
    NegativeProbability { h: usize, s: usize, a: usize, next: usize, value: f64 },
    #[error("transition row at stage {h}, state {s}, action {a} sums to {sum}")]
    RowNotStochastic { h: usize, s: usize, a: usize, sum: f64 },
    #[error("reward mean {mean} outside [0, 1] at stage {h}, state {s}, action {a}")]
    RewardOutOfRange { h: usize, s: usize, a: usize, mean: f64 },
    #[error("non-positive Gaussian variance {variance} at stage {h}, state {s}, action {a}")]
    InvalidVariance { h: usize, s: usize, a: usize, variance: f64 },
    #[error("policy picks unavailable action {a} at stage {h}, state {s}")]
    InvalidPolicyAction { h: usize, s: usize, a: usize },
    #[error("policy shape mismatch: expected {expected} cells, found {found}")]
    PolicyShape { expected: usize, found: usize },
    #[error("stage {0} out of range")]
    StageOutOfRange(usize),
    #[error("state {0} out of range")]
    StateOutOfRange(usize),
    #[error("shape mismatch in {field}: expected {expected}, found {found}")]
    ShapeMismatch { field: String, expected: usize, found: usize },
    #[error("missing {field} at stage {h}, state {s}, action {a}")]
    Missing { field: &'static str, h: usize, s: usize, a: usize },
    #[error("malformed MDP file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Distribution of the reward collected at a `(h, s, a)` triplet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RewardModel {
    Bernoulli { mean: f64 },
    Fixed { mean: f64 },
    Gaussian { mean: f64, variance: f64 },
}

impl RewardModel {
    pub fn mean(&self) -> f64 {
        match *self {
            RewardModel::Bernoulli { mean } | RewardModel::Fixed { mean } => mean,
            RewardModel::Gaussian { mean, .. } => mean,
        }
    }

    /// True when samples are guaranteed to lie in `[0, 1]`.
    pub fn is_bounded(&self) -> bool {
        !matches!(self, RewardModel::Gaussian { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardModel::Fixed { mean } => mean,
            RewardModel::Bernoulli { mean } => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            RewardModel::Gaussian { mean, variance } => {
                Normal::new(mean, variance.sqrt()).expect("variance validated at construction").sample(rng)
            }
        }
    }
}

/// Dimensions, initial state and action masks: everything a learner may know
/// about an MDP without observing it.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpShape {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    masks: Vec<Vec<usize>>,
}

impl MdpShape {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Available actions at `(h, s)`, sorted ascending.
    #[inline]
    pub fn actions(&self, h: usize, s: usize) -> &[usize] {
        &self.masks[(h - 1) * self.num_states + s]
    }

    pub fn is_available(&self, h: usize, s: usize, a: usize) -> bool {
        self.actions(h, s).binary_search(&a).is_ok()
    }

    /// Number of `(h, s, a)` slots, available or not.
    pub fn num_triplets(&self) -> usize {
        self.horizon * self.num_states * self.num_actions
    }

    #[inline]
    pub fn triplet_index(&self, h: usize, s: usize, a: usize) -> usize {
        ((h - 1) * self.num_states + s) * self.num_actions + a
    }

    /// Inverse of [`MdpShape::triplet_index`].
    pub fn triplet_at(&self, idx: usize) -> (usize, usize, usize) {
        let a = idx % self.num_actions;
        let s = (idx / self.num_actions) % self.num_states;
        let h = idx / (self.num_actions * self.num_states) + 1;
        (h, s, a)
    }

    /// Iterates over every available `(h, s, a)`.
    pub fn available_triplets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (1..=self.horizon).flat_map(move |h| {
            (0..self.num_states).flat_map(move |s| self.actions(h, s).iter().map(move |&a| (h, s, a)))
        })
    }
}

/// A finite-horizon MDP with stage-dependent transitions and rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    shape: MdpShape,
    // indexed by ((h-1)*S + s)*A + a, then next state
    transitions: Vec<f64>,
    rewards: Vec<RewardModel>,
    deterministic: bool,
    // sparse view of the transitions: successors of triplet i are
    // succ_states[succ_offsets[i]..succ_offsets[i+1]]
    succ_offsets: Vec<usize>,
    succ_states: Vec<usize>,
    succ_probs: Vec<f64>,
    means: Vec<f64>,
}

impl Mdp {
    pub fn shape(&self) -> &MdpShape {
        &self.shape
    }

    pub fn num_states(&self) -> usize {
        self.shape.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.shape.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.shape.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.shape.initial_state
    }

    #[inline]
    pub fn actions(&self, h: usize, s: usize) -> &[usize] {
        self.shape.actions(h, s)
    }

    /// Next-state distribution `p_h(. | s, a)`. All zeros for unavailable actions.
    #[inline]
    pub fn transition(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.shape.triplet_index(h, s, a) * self.shape.num_states;
        &self.transitions[start..start + self.shape.num_states]
    }

    /// Next states with positive probability, and their probabilities, in
    /// increasing state order.
    #[inline]
    pub fn successors(&self, h: usize, s: usize, a: usize) -> (&[usize], &[f64]) {
        self.successors_at(self.shape.triplet_index(h, s, a))
    }

    #[inline]
    pub(crate) fn successors_at(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.succ_offsets[i]..self.succ_offsets[i + 1];
        (&self.succ_states[range.clone()], &self.succ_probs[range])
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> &RewardModel {
        &self.rewards[self.shape.triplet_index(h, s, a)]
    }

    #[inline]
    pub fn mean_reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.means[self.shape.triplet_index(h, s, a)]
    }

    #[inline]
    pub(crate) fn mean_reward_at(&self, i: usize) -> f64 {
        self.means[i]
    }

    /// True when every available transition row is one-hot.
    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    /// First available triplet whose reward model is not supported on `[0, 1]`.
    pub fn first_unbounded_reward(&self) -> Option<(usize, usize, usize)> {
        self.shape.available_triplets().find(|&(h, s, a)| !self.reward(h, s, a).is_bounded())
    }

    /// Replaces every reward model with a Bernoulli of the same mean.
    ///
    /// Fails if some mean lies outside `[0, 1]`.
    pub fn with_bernoulli_rewards(&self) -> Result<Mdp, MdpError> {
        let mut out = self.clone();
        for (h, s, a) in self.shape.available_triplets() {
            let mean = self.mean_reward(h, s, a);
            if !(0.0..=1.0).contains(&mean) {
                return Err(MdpError::RewardOutOfRange { h, s, a, mean });
            }
            out.rewards[self.shape.triplet_index(h, s, a)] = RewardModel::Bernoulli { mean };
        }
        Ok(out)
    }
}

/// Incremental constructor for [`Mdp`]; `build` validates every invariant.
#[derive(Clone, Debug)]
pub struct MdpBuilder {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    masks: Vec<Vec<usize>>,
    transitions: Vec<f64>,
    rewards: Vec<RewardModel>,
}

impl MdpBuilder {
    /// All actions available, all transitions unset (zero), all rewards fixed at 0.
    pub fn new(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        let cells = horizon * num_states;
        MdpBuilder {
            num_states,
            num_actions,
            horizon,
            initial_state: 0,
            masks: vec![(0..num_actions).collect(); cells],
            transitions: vec![0.0; cells * num_actions * num_states],
            rewards: vec![RewardModel::Fixed { mean: 0.0 }; cells * num_actions],
        }
    }

    fn idx(&self, h: usize, s: usize, a: usize) -> usize {
        assert!((1..=self.horizon).contains(&h), "stage {h} out of range");
        assert!(s < self.num_states && a < self.num_actions);
        ((h - 1) * self.num_states + s) * self.num_actions + a
    }

    pub fn initial_state(&mut self, s: usize) -> &mut Self {
        self.initial_state = s;
        self
    }

    pub fn mask(&mut self, h: usize, s: usize, mut actions: Vec<usize>) -> &mut Self {
        assert!((1..=self.horizon).contains(&h) && s < self.num_states);
        actions.sort_unstable();
        actions.dedup();
        self.masks[(h - 1) * self.num_states + s] = actions;
        self
    }

    pub fn transition(&mut self, h: usize, s: usize, a: usize, row: &[f64]) -> &mut Self {
        assert_eq!(row.len(), self.num_states, "transition row length");
        let start = self.idx(h, s, a) * self.num_states;
        self.transitions[start..start + self.num_states].copy_from_slice(row);
        self
    }

    pub fn deterministic_transition(&mut self, h: usize, s: usize, a: usize, next: usize) -> &mut Self {
        assert!(next < self.num_states);
        let start = self.idx(h, s, a) * self.num_states;
        let row = &mut self.transitions[start..start + self.num_states];
        row.fill(0.0);
        row[next] = 1.0;
        self
    }

    pub fn reward(&mut self, h: usize, s: usize, a: usize, model: RewardModel) -> &mut Self {
        let i = self.idx(h, s, a);
        self.rewards[i] = model;
        self
    }

    pub fn build(self) -> Result<Mdp, MdpError> {
        let MdpBuilder { num_states: ns, num_actions: na, horizon, initial_state, masks, mut transitions, mut rewards } =
            self;
        if ns == 0 || na == 0 || horizon == 0 {
            return Err(MdpError::InvalidDimensions { states: ns, actions: na, horizon });
        }
        if initial_state >= ns {
            return Err(MdpError::InitialStateOutOfRange(initial_state));
        }
        let mut deterministic = true;
        for h in 1..=horizon {
            for s in 0..ns {
                let mask = &masks[(h - 1) * ns + s];
                if mask.is_empty() {
                    return Err(MdpError::EmptyMask { h, s });
                }
                if let Some(&a) = mask.iter().find(|&&a| a >= na) {
                    return Err(MdpError::MaskActionOutOfRange { h, s, a });
                }
                for a in 0..na {
                    let t = ((h - 1) * ns + s) * na + a;
                    let row = &mut transitions[t * ns..(t + 1) * ns];
                    if mask.binary_search(&a).is_err() {
                        row.fill(0.0);
                        rewards[t] = RewardModel::Fixed { mean: 0.0 };
                        continue;
                    }
                    if let Some((next, &value)) = row.iter().enumerate().find(|(_, &p)| !(p >= 0.0)) {
                        return Err(MdpError::NegativeProbability { h, s, a, next, value });
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > PROB_TOLERANCE {
                        return Err(MdpError::RowNotStochastic { h, s, a, sum });
                    }
                    // rows already normalized up to rounding are kept bit-exact
                    if (sum - 1.0).abs() > 4.0 * ns as f64 * f64::EPSILON {
                        row.iter_mut().for_each(|p| *p /= sum);
                    }
                    if row.iter().filter(|&&p| p > 0.0).count() != 1 {
                        deterministic = false;
                    }
                    match rewards[t] {
                        RewardModel::Bernoulli { mean } | RewardModel::Fixed { mean } => {
                            if !(0.0..=1.0).contains(&mean) {
                                return Err(MdpError::RewardOutOfRange { h, s, a, mean });
                            }
                        }
                        RewardModel::Gaussian { variance, mean } => {
                            if !(variance > 0.0) || !variance.is_finite() {
                                return Err(MdpError::InvalidVariance { h, s, a, variance });
                            }
                            if !mean.is_finite() {
                                return Err(MdpError::RewardOutOfRange { h, s, a, mean });
                            }
                        }
                    }
                }
            }
        }
        let mut succ_offsets = Vec::with_capacity(transitions.len() / ns + 1);
        let mut succ_states = Vec::new();
        let mut succ_probs = Vec::new();
        succ_offsets.push(0);
        for row in transitions.chunks(ns) {
            for (next, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    succ_states.push(next);
                    succ_probs.push(p);
                }
            }
            succ_offsets.push(succ_states.len());
        }
        let means = rewards.iter().map(RewardModel::mean).collect();
        Ok(Mdp {
            shape: MdpShape { num_states: ns, num_actions: na, horizon, initial_state, masks },
            transitions,
            rewards,
            deterministic,
            succ_offsets,
            succ_states,
            succ_probs,
            means,
        })
    }
}

/// A stage-indexed deterministic policy `pi_h(s)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    num_states: usize,
    horizon: usize,
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    /// Picks the lowest available action everywhere.
    pub fn first_available(shape: &MdpShape) -> Self {
        let actions =
            (1..=shape.horizon).flat_map(|h| (0..shape.num_states).map(move |s| shape.actions(h, s)[0])).collect();
        DeterministicPolicy { num_states: shape.num_states, horizon: shape.horizon, actions }
    }

    /// Builds a policy from a table in `[h-1][s]` order.
    pub fn from_table(num_states: usize, horizon: usize, actions: Vec<usize>) -> Result<Self, MdpError> {
        if actions.len() != num_states * horizon {
            return Err(MdpError::PolicyShape { expected: num_states * horizon, found: actions.len() });
        }
        Ok(DeterministicPolicy { num_states, horizon, actions })
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[(h - 1) * self.num_states + s]
    }

    #[inline]
    pub fn set_action(&mut self, h: usize, s: usize, a: usize) {
        self.actions[(h - 1) * self.num_states + s] = a;
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.actions
    }

    /// Checks every chosen action against the MDP's masks.
    pub fn validate(&self, shape: &MdpShape) -> Result<(), MdpError> {
        let expected = shape.num_states * shape.horizon;
        if self.actions.len() != expected || self.num_states != shape.num_states {
            return Err(MdpError::PolicyShape { expected, found: self.actions.len() });
        }
        for h in 1..=shape.horizon {
            for s in 0..shape.num_states {
                let a = self.action(h, s);
                if !shape.is_available(h, s, a) {
                    return Err(MdpError::InvalidPolicyAction { h, s, a });
                }
            }
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a fingerprint of the action table.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for &a in &self.actions {
            for b in (a as u64).to_le_bytes() {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        }
        hash
    }
}

/// Q and V tables for stages `1..=H+1`; the `H+1` rows are zero.
///
/// Q entries of unavailable actions are `-inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    q: Vec<f64>,
    v: Vec<f64>,
}

impl ValueTable {
    pub(crate) fn zeros(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        ValueTable {
            num_states,
            num_actions,
            horizon,
            q: vec![f64::NEG_INFINITY; (horizon + 1) * num_states * num_actions],
            v: vec![0.0; (horizon + 1) * num_states],
        }
    }

    #[inline]
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        if h == self.horizon + 1 {
            return 0.0;
        }
        self.q[((h - 1) * self.num_states + s) * self.num_actions + a]
    }

    #[inline]
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[(h - 1) * self.num_states + s]
    }

    /// V row for stage `h` (length S).
    pub fn v_row(&self, h: usize) -> &[f64] {
        &self.v[(h - 1) * self.num_states..h * self.num_states]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn set_q(&mut self, h: usize, s: usize, a: usize, value: f64) {
        self.q[((h - 1) * self.num_states + s) * self.num_actions + a] = value;
    }

    fn set_v(&mut self, h: usize, s: usize, value: f64) {
        self.v[(h - 1) * self.num_states + s] = value;
    }
}

/// Expected immediate reward plus expected next-stage value.
#[inline]
pub(crate) fn bellman_backup(mdp: &Mdp, h: usize, s: usize, a: usize, next_v: &[f64]) -> f64 {
    let i = mdp.shape.triplet_index(h, s, a);
    let (states, probs) = mdp.successors_at(i);
    let mut acc = 0.0;
    for (&next, p) in states.iter().zip(probs) {
        acc += p * next_v[next];
    }
    mdp.mean_reward_at(i) + acc
}

/// Exact `Q^pi`, `V^pi` by backward induction on reward means.
pub fn evaluate_policy(mdp: &Mdp, pi: &DeterministicPolicy) -> Result<ValueTable, MdpError> {
    pi.validate(mdp.shape())?;
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut table = ValueTable::zeros(ns, na, horizon);
    for h in (1..=horizon).rev() {
        let next_v = table.v_row(h + 1).to_vec();
        for s in 0..ns {
            for &a in mdp.actions(h, s) {
                table.set_q(h, s, a, bellman_backup(mdp, h, s, a, &next_v));
            }
            let value = table.q(h, s, pi.action(h, s));
            table.set_v(h, s, value);
        }
    }
    Ok(table)
}

/// `V^pi` only, written into `out` (length `(H+1)*S`). Allocation-free hot path
/// for policy enumeration; the policy is assumed valid.
pub(crate) fn policy_values_into(mdp: &Mdp, pi: &DeterministicPolicy, out: &mut [f64]) {
    let ns = mdp.num_states();
    let horizon = mdp.horizon();
    out[horizon * ns..].fill(0.0);
    for h in (1..=horizon).rev() {
        let (head, tail) = out.split_at_mut(h * ns);
        let next_v = &tail[..ns];
        let cur = &mut head[(h - 1) * ns..];
        for (s, slot) in cur.iter_mut().enumerate() {
            *slot = bellman_backup(mdp, h, s, pi.action(h, s), next_v);
        }
    }
}

/// Optimal values together with one greedy optimal policy.
#[derive(Clone, Debug)]
pub struct OptimalSolution {
    pub values: ValueTable,
    pub policy: DeterministicPolicy,
}

/// `Q*`, `V*` by backward induction; ties go to the lowest available action.
pub fn optimal_values(mdp: &Mdp) -> OptimalSolution {
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut table = ValueTable::zeros(ns, na, horizon);
    let mut policy = DeterministicPolicy::first_available(mdp.shape());
    for h in (1..=horizon).rev() {
        let next_v = table.v_row(h + 1).to_vec();
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = mdp.actions(h, s)[0];
            for &a in mdp.actions(h, s) {
                let q = bellman_backup(mdp, h, s, a, &next_v);
                table.set_q(h, s, a, q);
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            table.set_v(h, s, best);
            policy.set_action(h, s, best_a);
        }
    }
    OptimalSolution { values: table, policy }
}

/// State and state-action occupancy per stage under a policy.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitationTable {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    origin: Option<(usize, usize)>,
    state_prob: Vec<f64>,
    pair_prob: Vec<f64>,
}

impl VisitationTable {
    /// `p_h(s)`; conditional on the origin when one was given.
    #[inline]
    pub fn state(&self, h: usize, s: usize) -> f64 {
        self.state_prob[(h - 1) * self.num_states + s]
    }

    #[inline]
    pub fn pair(&self, h: usize, s: usize, a: usize) -> f64 {
        self.pair_prob[((h - 1) * self.num_states + s) * self.num_actions + a]
    }

    /// `(state, stage)` the mass starts from, if conditional.
    pub fn origin(&self) -> Option<(usize, usize)> {
        self.origin
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Pair probabilities in triplet-index order.
    pub fn pair_probs(&self) -> &[f64] {
        &self.pair_prob
    }
}

/// Forward induction of visitation probabilities.
///
/// With `from = Some((s, h))` the table holds `P(s_l = s' | s_h = s)` for `l >= h`
/// and zeros before `h`.
pub fn visitation_probabilities(
    mdp: &Mdp,
    pi: &DeterministicPolicy,
    from: Option<(usize, usize)>,
) -> Result<VisitationTable, MdpError> {
    pi.validate(mdp.shape())?;
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let (start_state, start_stage) = from.unwrap_or((mdp.initial_state(), 1));
    if !(1..=horizon).contains(&start_stage) {
        return Err(MdpError::StageOutOfRange(start_stage));
    }
    if start_state >= ns {
        return Err(MdpError::StateOutOfRange(start_state));
    }
    let mut state_prob = vec![0.0; horizon * ns];
    state_prob[(start_stage - 1) * ns + start_state] = 1.0;
    propagate_states(mdp, pi, start_stage, &mut state_prob);
    let mut pair_prob = vec![0.0; horizon * ns * na];
    for h in 1..=horizon {
        for s in 0..ns {
            pair_prob[((h - 1) * ns + s) * na + pi.action(h, s)] = state_prob[(h - 1) * ns + s];
        }
    }
    Ok(VisitationTable { num_states: ns, num_actions: na, horizon, origin: from, state_prob, pair_prob })
}

/// Pushes the stage-`from_stage` mass forward through all later stages.
/// `state_prob` is `H*S`, stage-major.
pub(crate) fn propagate_states(mdp: &Mdp, pi: &DeterministicPolicy, from_stage: usize, state_prob: &mut [f64]) {
    let ns = mdp.num_states();
    for h in from_stage..mdp.horizon() {
        let (head, tail) = state_prob.split_at_mut(h * ns);
        let cur = &head[(h - 1) * ns..];
        let next = &mut tail[..ns];
        next.fill(0.0);
        for (s, &mass) in cur.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let (states, probs) = mdp.successors(h, s, pi.action(h, s));
            for (&n, p) in states.iter().zip(probs) {
                next[n] += mass * p;
            }
        }
    }
}

/// One transition of an episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// An `H`-step trajectory; `steps[h-1]` is stage `h`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

#[inline]
fn sample_next<R: Rng + ?Sized>((states, probs): (&[usize], &[f64]), rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (&s, &p) in states.iter().zip(probs) {
        acc += p;
        if u < acc {
            return s;
        }
    }
    *states.last().expect("available rows have a successor")
}

/// Rolls out one episode of `pi` from the initial state.
pub fn sample_episode<R: Rng + ?Sized>(mdp: &Mdp, pi: &DeterministicPolicy, rng: &mut R) -> Trajectory {
    let mut traj = Trajectory { steps: Vec::with_capacity(mdp.horizon()) };
    sample_episode_into(mdp, pi, rng, &mut traj);
    traj
}

/// Same as [`sample_episode`] but reuses the trajectory buffer.
pub fn sample_episode_into<R: Rng + ?Sized>(mdp: &Mdp, pi: &DeterministicPolicy, rng: &mut R, traj: &mut Trajectory) {
    traj.steps.clear();
    let mut s = mdp.initial_state();
    for h in 1..=mdp.horizon() {
        let a = pi.action(h, s);
        debug_assert!(mdp.shape().is_available(h, s, a));
        let reward = mdp.reward(h, s, a).sample(rng);
        let next_state = sample_next(mdp.successors(h, s, a), rng);
        traj.steps.push(Step { state: s, action: a, reward, next_state });
        s = next_state;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_state(horizon: usize, mean: f64) -> Mdp {
        let mut b = MdpBuilder::new(1, 1, horizon);
        for h in 1..=horizon {
            b.deterministic_transition(h, 0, 0, 0).reward(h, 0, 0, RewardModel::Fixed { mean });
        }
        b.build().unwrap()
    }

    #[test]
    fn unit_rewards_sum_over_horizon() {
        let mdp = single_state(2, 1.0);
        let pi = DeterministicPolicy::first_available(mdp.shape());
        let vt = evaluate_policy(&mdp, &pi).unwrap();
        assert_eq!(vt.v(1, 0), 2.0);
        assert_eq!(vt.v(3, 0), 0.0);
        assert_eq!(vt.q(3, 0, 0), 0.0);
    }

    #[test]
    fn rejects_non_stochastic_row_with_coordinates() {
        let mut b = MdpBuilder::new(2, 1, 1);
        b.transition(1, 0, 0, &[0.5, 0.4]).deterministic_transition(1, 1, 0, 0);
        match b.build() {
            Err(MdpError::RowNotStochastic { h: 1, s: 0, a: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn renormalizes_rows_within_tolerance() {
        let mut b = MdpBuilder::new(2, 1, 1);
        b.transition(1, 0, 0, &[0.5, 0.5 + 1e-10]).deterministic_transition(1, 1, 0, 0);
        let mdp = b.build().unwrap();
        let sum: f64 = mdp.transition(1, 0, 0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_reward_and_variance() {
        let mut b = MdpBuilder::new(1, 1, 1);
        b.deterministic_transition(1, 0, 0, 0).reward(1, 0, 0, RewardModel::Bernoulli { mean: 1.5 });
        assert!(matches!(b.build(), Err(MdpError::RewardOutOfRange { .. })));
        let mut b = MdpBuilder::new(1, 1, 1);
        b.deterministic_transition(1, 0, 0, 0).reward(1, 0, 0, RewardModel::Gaussian { mean: 0.0, variance: 0.0 });
        assert!(matches!(b.build(), Err(MdpError::InvalidVariance { .. })));
    }

    #[test]
    fn rejects_empty_mask_and_invalid_policy() {
        let mut b = MdpBuilder::new(1, 2, 1);
        b.mask(1, 0, vec![]);
        assert!(matches!(b.build(), Err(MdpError::EmptyMask { h: 1, s: 0 })));

        let mut b = MdpBuilder::new(1, 2, 1);
        b.mask(1, 0, vec![1]).deterministic_transition(1, 0, 1, 0);
        let mdp = b.build().unwrap();
        let pi = DeterministicPolicy::from_table(1, 1, vec![0]).unwrap();
        match evaluate_policy(&mdp, &pi) {
            Err(MdpError::InvalidPolicyAction { h: 1, s: 0, a: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic_chain_visits_are_zero_one() {
        let mut b = MdpBuilder::new(3, 2, 3);
        for h in 1..=3 {
            for s in 0..3 {
                b.deterministic_transition(h, s, 0, (s + 1) % 3).deterministic_transition(h, s, 1, s);
            }
        }
        let mdp = b.build().unwrap();
        assert!(mdp.is_deterministic());
        let pi = DeterministicPolicy::first_available(mdp.shape());
        let vt = visitation_probabilities(&mdp, &pi, None).unwrap();
        for h in 1..=3 {
            for s in 0..3 {
                let p = vt.state(h, s);
                assert!(p == 0.0 || p == 1.0);
            }
            assert_eq!(vt.state(h, (h - 1) % 3), 1.0);
        }
    }

    #[test]
    fn conditional_visitation_starts_at_origin() {
        let mut b = MdpBuilder::new(2, 1, 3);
        for h in 1..=3 {
            b.transition(h, 0, 0, &[0.25, 0.75]).transition(h, 1, 0, &[0.5, 0.5]);
        }
        let mdp = b.build().unwrap();
        let pi = DeterministicPolicy::first_available(mdp.shape());
        let vt = visitation_probabilities(&mdp, &pi, Some((1, 2))).unwrap();
        assert_eq!(vt.state(1, 0), 0.0);
        assert_eq!(vt.state(2, 1), 1.0);
        assert_eq!(vt.state(3, 0), 0.5);
        assert!(visitation_probabilities(&mdp, &pi, Some((0, 4))).is_err());
    }

    #[test]
    fn fixed_reward_deterministic_trajectory_ignores_seed() {
        let mdp = single_state(4, 0.3);
        let pi = DeterministicPolicy::first_available(mdp.shape());
        let a = sample_episode(&mdp, &pi, &mut ChaCha8Rng::seed_from_u64(1));
        let b = sample_episode(&mdp, &pi, &mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 4);
    }

    #[test]
    fn bernoulli_mean_converges() {
        let mut b = MdpBuilder::new(1, 1, 1);
        b.deterministic_transition(1, 0, 0, 0).reward(1, 0, 0, RewardModel::Bernoulli { mean: 0.3 });
        let mdp = b.build().unwrap();
        let pi = DeterministicPolicy::first_available(mdp.shape());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let total: f64 = (0..n).map(|_| sample_episode(&mdp, &pi, &mut rng).total_reward()).sum();
        assert!((total / n as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn triplet_index_roundtrip() {
        let mdp = single_state(3, 0.0);
        let shape = mdp.shape();
        for idx in 0..shape.num_triplets() {
            let (h, s, a) = shape.triplet_at(idx);
            assert_eq!(shape.triplet_index(h, s, a), idx);
        }
    }
}
