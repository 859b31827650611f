//! BPI-UCRL: optimistic best-policy identification with an adaptive stopping rule.

mod agent;
pub mod diagnostics;
mod estimates;
mod thresholds;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::theorem1_explicit_bound;
use crate::mdp::{
    evaluate_policy, optimal_values, sample_episode_into, DeterministicPolicy, Mdp, MdpError, Trajectory,
};
use crate::oracles::{gap_report, EnumerationBudget};

pub use agent::{AgentState, BonusVariant, PolicyBounds};
pub use diagnostics::{
    bonus_to_go, good_event_check, kl_categorical, stopping_gap_bound, targeted_set, GoodEventEntry, GoodEventKind,
    GoodEventLog, LemmaKind, LemmaLog, LemmaViolation, PseudoCounts, ViolationSite,
};
pub use estimates::Estimates;
pub use thresholds::{threshold_beta, threshold_beta_p, threshold_beta_r, Thresholds};

/// Episode cap used when the explicit bound cannot be evaluated.
pub const FALLBACK_MAX_EPISODES: u64 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum BpiError {
    #[error("delta must lie in (0, 1) (got {0})")]
    InvalidDelta(f64),
    #[error("epsilon must be positive and finite (got {0})")]
    InvalidEpsilon(f64),
    #[error("rewards must be supported on [0, 1]; triplet (h={h}, s={s}, a={a}) is not")]
    UnboundedReward { h: usize, s: usize, a: usize },
    #[error("empirical transition at (h={h}, s={s}, a={a}) charges a zero-probability state")]
    KlUndefined { h: usize, s: usize, a: usize },
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpiConfig {
    pub variant: BonusVariant,
    /// Per-episode good-event, targeting and lemma checks against the true MDP.
    pub diagnostics: bool,
    /// Keep one [`EpisodeSummary`] per episode.
    pub record_history: bool,
    /// `None`: ten times the explicit bound (or [`FALLBACK_MAX_EPISODES`]).
    pub max_episodes: Option<u64>,
}

impl Default for BpiConfig {
    fn default() -> Self {
        BpiConfig { variant: BonusVariant::Stochastic, diagnostics: false, record_history: false, max_episodes: None }
    }
}

/// Ten times the explicit bound, falling back to [`FALLBACK_MAX_EPISODES`] when
/// the gaps are too expensive to enumerate.
pub fn default_max_episodes(mdp: &Mdp, epsilon: f64, delta: f64) -> u64 {
    gap_report(mdp, EnumerationBudget::default())
        .ok()
        .and_then(|g| theorem1_explicit_bound(&g, delta, epsilon).ok())
        .map(|b| (10.0 * b.value).min(u64::MAX as f64 / 2.0) as u64)
        .unwrap_or(FALLBACK_MAX_EPISODES)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub policy_hash: u64,
    pub stopping_gap: f64,
}

/// What the diagnostics collected over a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunDiagnostics {
    /// `Z_h^{tau-1}(s, a)` in triplet-index order.
    pub targets: Vec<u64>,
    pub pseudo_counts: Vec<f64>,
    pub good_event: GoodEventLog,
    pub lemmas: LemmaLog,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub tau: u64,
    /// The stopping rule fired; false when the episode cap was hit.
    pub stopped: bool,
    pub recommended: DeterministicPolicy,
    pub recommended_value: f64,
    pub optimal_value: f64,
    /// `V^{pi_hat}_1(s_1) >= V*_1(s_1) - eps` with exact values.
    pub success: bool,
    pub final_gap: f64,
    /// Stopping gap at `tau - 1` (the gap with no data is `H`).
    pub previous_gap: f64,
    /// `n_h^tau(s, a)` in triplet-index order.
    pub counts: Vec<u64>,
    pub diagnostics: Option<RunDiagnostics>,
    pub history: Vec<EpisodeSummary>,
}

impl RunResult {
    pub fn truncated(&self) -> bool {
        !self.stopped
    }

    /// True when diagnostics were off or the good event held at every episode.
    pub fn good_event_holds(&self) -> bool {
        self.diagnostics.as_ref().is_none_or(|d| d.good_event.holds())
    }
}

/// Runs BPI-UCRL until the stopping rule fires or the episode cap is reached.
pub fn run<R: Rng + ?Sized>(
    mdp: &Mdp,
    epsilon: f64,
    delta: f64,
    config: &BpiConfig,
    rng: &mut R,
) -> Result<RunResult, BpiError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(BpiError::InvalidEpsilon(epsilon));
    }
    if let Some((h, s, a)) = mdp.first_unbounded_reward() {
        return Err(BpiError::UnboundedReward { h, s, a });
    }
    let mut state = AgentState::new(mdp.shape(), delta, config.variant)?;
    let max_episodes = config.max_episodes.unwrap_or_else(|| default_max_episodes(mdp, epsilon, delta)).max(1);
    let mut diag = config.diagnostics.then(|| diagnostics::Diagnostics::new(mdp));
    let mut traj = Trajectory { steps: Vec::with_capacity(mdp.horizon()) };
    let mut touched = Vec::with_capacity(mdp.horizon());
    let mut history = Vec::new();
    let mut previous_gap = state.stopping_gap();
    let mut stopped = false;

    loop {
        if let Some(d) = diag.as_mut() {
            d.before_episode(&state);
        }
        sample_episode_into(mdp, state.sampling_rule(), rng, &mut traj);
        state.update_into(&traj, &mut touched);
        state.confidence_q_bounds();
        if let Some(d) = diag.as_mut() {
            d.after_episode(&state, &touched)?;
        }
        let gap = state.stopping_gap();
        if config.record_history {
            history.push(EpisodeSummary {
                episode: state.episode(),
                policy_hash: state.sampling_rule().fingerprint(),
                stopping_gap: gap,
            });
        }
        if gap <= epsilon {
            stopped = true;
            break;
        }
        if state.episode() >= max_episodes {
            break;
        }
        previous_gap = gap;
    }

    let recommended = state.recommend();
    let recommended_value = evaluate_policy(mdp, &recommended)?.v(1, mdp.initial_state());
    let optimal_value = optimal_values(mdp).values.v(1, mdp.initial_state());
    let diagnostics = diag.map(|mut d| {
        d.check_policy_bounds(&state, &recommended);
        d.check_policy_bounds(&state, &state.sampling_rule().clone());
        RunDiagnostics {
            targets: d.targets,
            pseudo_counts: d.pseudo.as_slice().to_vec(),
            good_event: d.good_event,
            lemmas: d.lemmas,
        }
    });
    Ok(RunResult {
        tau: state.episode(),
        stopped,
        success: recommended_value >= optimal_value - epsilon,
        recommended,
        recommended_value,
        optimal_value,
        final_gap: state.stopping_gap(),
        previous_gap,
        counts: state.estimates().counts().to_vec(),
        diagnostics,
        history,
    })
}
