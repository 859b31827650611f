//! Agent state: estimators, bonuses, upper/lower confidence bounds and the
//! sampling, stopping and recommendation rules.

use crate::mdp::{DeterministicPolicy, MdpShape, Trajectory};

use super::estimates::Estimates;
use super::thresholds::Thresholds;
use super::BpiError;

/// Shape of the exploration bonus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BonusVariant {
    /// `(H-h+1) * min(sqrt(beta(n)/n), 1)`.
    #[default]
    Stochastic,
    /// `min(sqrt(beta^r(n)/n), 1)`, valid when transitions are known to be deterministic.
    Deterministic,
}

#[derive(Clone, Debug)]
pub struct AgentState {
    est: Estimates,
    thresholds: Thresholds,
    variant: BonusVariant,
    episode: u64,
    bonus: Vec<f64>,
    upper_q: Vec<f64>,
    lower_q: Vec<f64>,
    upper_v: Vec<f64>,
    lower_v: Vec<f64>,
    policy: DeterministicPolicy,
    // (state, action range in `actions`) per cell, stage-major
    cells: Vec<(usize, usize, usize)>,
    // (action, triplet index)
    actions: Vec<(usize, usize)>,
}

impl AgentState {
    /// Fresh agent knowing only the action masks; bounds are already computed.
    pub fn new(shape: &MdpShape, delta: f64, variant: BonusVariant) -> Result<Self, BpiError> {
        let thresholds = Thresholds::new(shape.num_states(), shape.num_actions(), shape.horizon(), delta)?;
        Ok(Self::from_estimates(Estimates::new(shape), thresholds, variant))
    }

    pub fn from_estimates(est: Estimates, thresholds: Thresholds, variant: BonusVariant) -> Self {
        let shape = est.shape().clone();
        let n = shape.num_triplets();
        let ns = shape.num_states();
        let rows = (shape.horizon() + 1) * ns;
        let mut state = AgentState {
            est,
            thresholds,
            variant,
            episode: 0,
            bonus: vec![0.0; n],
            upper_q: vec![f64::NEG_INFINITY; n],
            lower_q: vec![f64::NEG_INFINITY; n],
            upper_v: vec![0.0; rows],
            lower_v: vec![0.0; rows],
            policy: DeterministicPolicy::first_available(&shape),
            cells: Vec::with_capacity(shape.horizon() * ns),
            actions: Vec::new(),
        };
        for h in 1..=shape.horizon() {
            for s in 0..ns {
                let start = state.actions.len();
                state.actions.extend(shape.actions(h, s).iter().map(|&a| (a, shape.triplet_index(h, s, a))));
                state.cells.push((s, start, state.actions.len()));
            }
        }
        for (h, s, a) in shape.available_triplets() {
            let i = shape.triplet_index(h, s, a);
            state.bonus[i] = state.compute_bonus(h, s, a);
        }
        state.confidence_q_bounds();
        state
    }

    pub fn shape(&self) -> &MdpShape {
        self.est.shape()
    }

    pub fn estimates(&self) -> &Estimates {
        &self.est
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn variant(&self) -> BonusVariant {
        self.variant
    }

    /// Number of completed episodes `t`.
    pub fn episode(&self) -> u64 {
        self.episode
    }

    /// Bonus from the current count. With no data it is the full range `H-h+1`
    /// in both variants, so the bounds start at their clip values.
    pub fn compute_bonus(&self, h: usize, s: usize, a: usize) -> f64 {
        let range = (self.shape().horizon() - h + 1) as f64;
        let n = self.est.count(h, s, a);
        if n == 0 {
            return range;
        }
        let n = n as f64;
        match self.variant {
            BonusVariant::Stochastic => range * (self.thresholds.beta(n) / n).sqrt().min(1.0),
            BonusVariant::Deterministic => (self.thresholds.beta_r(n) / n).sqrt().min(1.0),
        }
    }

    /// Cached bonus `b_h^t(s, a)`.
    #[inline]
    pub fn bonus(&self, h: usize, s: usize, a: usize) -> f64 {
        self.bonus[self.shape().triplet_index(h, s, a)]
    }

    pub(crate) fn bonuses(&self) -> &[f64] {
        &self.bonus
    }

    pub(crate) fn upper_q_slice(&self) -> &[f64] {
        &self.upper_q
    }

    pub(crate) fn lower_q_slice(&self) -> &[f64] {
        &self.lower_q
    }

    /// Backward recursion for the upper and lower bounds; also refreshes the
    /// greedy optimistic policy `pi^{t+1}`.
    pub fn confidence_q_bounds(&mut self) {
        let ns = self.shape().num_states();
        let horizon = self.shape().horizon();
        for h in (1..=horizon).rev() {
            let cap = (horizon - h + 1) as f64;
            let (up_head, up_tail) = self.upper_v.split_at_mut(h * ns);
            let (lo_head, lo_tail) = self.lower_v.split_at_mut(h * ns);
            let next_up = &up_tail[..ns];
            let next_lo = &lo_tail[..ns];
            let cur_up = &mut up_head[(h - 1) * ns..];
            let cur_lo = &mut lo_head[(h - 1) * ns..];
            for &(s, start, end) in &self.cells[(h - 1) * ns..h * ns] {
                let mut best_u = f64::NEG_INFINITY;
                let mut best_a = 0;
                let mut best_l = f64::NEG_INFINITY;
                for &(a, i) in &self.actions[start..end] {
                    let (u, l) = if self.est.count_at(i) == 0 {
                        (cap, 0.0)
                    } else {
                        let (mut pu, mut pl) = (0.0, 0.0);
                        for &(next, p) in self.est.support_at(i) {
                            pu += p * next_up[next];
                            pl += p * next_lo[next];
                        }
                        let r = self.est.r_hat_at(i);
                        let b = self.bonus[i];
                        let u = r + b + pu;
                        let l = r - b + pl;
                        (if u < cap { u } else { cap }, if l > 0.0 { l } else { 0.0 })
                    };
                    self.upper_q[i] = u;
                    self.lower_q[i] = l;
                    if u > best_u {
                        best_u = u;
                        best_a = a;
                    }
                    if l > best_l {
                        best_l = l;
                    }
                }
                cur_up[s] = best_u;
                cur_lo[s] = best_l;
                self.policy.set_action(h, s, best_a);
            }
        }
    }

    #[inline]
    pub fn upper_q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.upper_q[self.shape().triplet_index(h, s, a)]
    }

    #[inline]
    pub fn lower_q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.lower_q[self.shape().triplet_index(h, s, a)]
    }

    /// `h` ranges over `1..=H+1`; row `H+1` is zero.
    #[inline]
    pub fn upper_v(&self, h: usize, s: usize) -> f64 {
        self.upper_v[(h - 1) * self.shape().num_states() + s]
    }

    #[inline]
    pub fn lower_v(&self, h: usize, s: usize) -> f64 {
        self.lower_v[(h - 1) * self.shape().num_states() + s]
    }

    /// `pi^{t+1}_h(s) = argmax_a upperQ_h^t(s, a)`, ties to the lowest action.
    pub fn sampling_rule(&self) -> &DeterministicPolicy {
        &self.policy
    }

    /// `max_a upperQ_1(s_1, a) - max_a lowerQ_1(s_1, a)`.
    pub fn stopping_gap(&self) -> f64 {
        let s1 = self.shape().initial_state();
        self.upper_v(1, s1) - self.lower_v(1, s1)
    }

    pub fn stopping_check(&self, epsilon: f64) -> bool {
        self.stopping_gap() <= epsilon
    }

    /// `argmax_a lowerQ_h(s, a)`, ties to the lowest action.
    pub fn recommend(&self) -> DeterministicPolicy {
        let shape = self.shape();
        let mut pi = DeterministicPolicy::first_available(shape);
        for h in 1..=shape.horizon() {
            for s in 0..shape.num_states() {
                let mut best = f64::NEG_INFINITY;
                for &a in shape.actions(h, s) {
                    let l = self.lower_q(h, s, a);
                    if l > best {
                        best = l;
                        pi.set_action(h, s, a);
                    }
                }
            }
        }
        pi
    }

    /// Adds one trajectory, refreshes estimators and bonuses of the touched cells
    /// and advances `t`. Bounds are not recomputed; call [`Self::confidence_q_bounds`].
    pub fn update_estimators(&mut self, traj: &Trajectory) -> Vec<usize> {
        let mut touched = Vec::with_capacity(traj.steps.len());
        self.update_into(traj, &mut touched);
        touched
    }

    pub(crate) fn update_into(&mut self, traj: &Trajectory, touched: &mut Vec<usize>) {
        self.est.update_into(traj, touched);
        for &i in touched.iter() {
            let (h, s, a) = self.shape().triplet_at(i);
            self.bonus[i] = self.compute_bonus(h, s, a);
        }
        self.episode += 1;
    }

    /// Per-policy confidence bounds: the same recursion with the next-stage value
    /// taken at `pi` instead of the maximum.
    pub fn policy_confidence_bounds(&self, pi: &DeterministicPolicy) -> PolicyBounds {
        let shape = self.shape();
        let ns = shape.num_states();
        let horizon = shape.horizon();
        let n = shape.num_triplets();
        let mut out = PolicyBounds {
            shape: shape.clone(),
            upper_q: vec![f64::NEG_INFINITY; n],
            lower_q: vec![f64::NEG_INFINITY; n],
            upper_v: vec![0.0; (horizon + 1) * ns],
            lower_v: vec![0.0; (horizon + 1) * ns],
        };
        for h in (1..=horizon).rev() {
            let cap = (horizon - h + 1) as f64;
            for s in 0..ns {
                for &a in shape.actions(h, s) {
                    let i = shape.triplet_index(h, s, a);
                    let (u, l) = if self.est.count_at(i) == 0 {
                        (cap, 0.0)
                    } else {
                        let (mut pu, mut pl) = (0.0, 0.0);
                        for &(next, p) in self.est.support_at(i) {
                            pu += p * out.upper_v[h * ns + next];
                            pl += p * out.lower_v[h * ns + next];
                        }
                        let r = self.est.r_hat_at(i);
                        let b = self.bonus[i];
                        (cap.min(r + b + pu), (r - b + pl).max(0.0))
                    };
                    out.upper_q[i] = u;
                    out.lower_q[i] = l;
                }
                let i = shape.triplet_index(h, s, pi.action(h, s));
                out.upper_v[(h - 1) * ns + s] = out.upper_q[i];
                out.lower_v[(h - 1) * ns + s] = out.lower_q[i];
            }
        }
        out
    }
}

/// Upper and lower bounds on `Q^pi` and `V^pi` for one policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyBounds {
    shape: MdpShape,
    upper_q: Vec<f64>,
    lower_q: Vec<f64>,
    upper_v: Vec<f64>,
    lower_v: Vec<f64>,
}

impl PolicyBounds {
    pub fn upper_q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.upper_q[self.shape.triplet_index(h, s, a)]
    }

    pub fn lower_q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.lower_q[self.shape.triplet_index(h, s, a)]
    }

    pub fn upper_v(&self, h: usize, s: usize) -> f64 {
        self.upper_v[(h - 1) * self.shape.num_states() + s]
    }

    pub fn lower_v(&self, h: usize, s: usize) -> f64 {
        self.lower_v[(h - 1) * self.shape.num_states() + s]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::random_mdp;
    use crate::mdp::{optimal_values, sample_episode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_data_bounds_are_clip_values() {
        let mdp = random_mdp(3, 2, 3, 0, true).unwrap();
        for variant in [BonusVariant::Stochastic, BonusVariant::Deterministic] {
            let st = AgentState::new(mdp.shape(), 0.1, variant).unwrap();
            for (h, s, a) in mdp.shape().available_triplets() {
                assert_eq!(st.bonus(h, s, a), (4 - h) as f64);
                assert_eq!(st.upper_q(h, s, a), (4 - h) as f64);
                assert_eq!(st.lower_q(h, s, a), 0.0);
            }
            assert_eq!(st.stopping_gap(), 3.0);
            assert!(!st.stopping_check(0.5));
            assert!(st.stopping_check(3.0));
            assert_eq!(st.sampling_rule(), &DeterministicPolicy::first_available(mdp.shape()));
        }
    }

    #[test]
    fn one_episode_updates_exactly_h_counts() {
        let mdp = random_mdp(3, 2, 3, 2, true).unwrap();
        let mut st = AgentState::new(mdp.shape(), 0.1, BonusVariant::Stochastic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let traj = sample_episode(&mdp, st.sampling_rule(), &mut rng);
        let touched = st.update_estimators(&traj);
        assert_eq!(touched.len(), 3);
        assert_eq!(st.estimates().counts().iter().sum::<u64>(), 3);
        assert_eq!(st.episode(), 1);
        for (k, step) in traj.steps.iter().enumerate() {
            let p: f64 = st.estimates().p_hat(k + 1, step.state, step.action).iter().sum();
            assert!((p - 1.0).abs() < 1e-12);
            assert_eq!(st.estimates().r_hat(k + 1, step.state, step.action), step.reward);
        }
    }

    #[test]
    fn reward_estimate_is_running_mean() {
        let mdp = random_mdp(2, 2, 2, 9, true).unwrap();
        let mut st = AgentState::new(mdp.shape(), 0.1, BonusVariant::Stochastic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut logged: std::collections::HashMap<(usize, usize, usize), Vec<f64>> = Default::default();
        for _ in 0..200 {
            let traj = sample_episode(&mdp, st.sampling_rule(), &mut rng);
            for (k, step) in traj.steps.iter().enumerate() {
                logged.entry((k + 1, step.state, step.action)).or_default().push(step.reward);
            }
            st.update_estimators(&traj);
            st.confidence_q_bounds();
        }
        for ((h, s, a), rewards) in logged {
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            assert!((st.estimates().r_hat(h, s, a) - mean).abs() < 1e-12);
            assert_eq!(st.estimates().count(h, s, a), rewards.len() as u64);
        }
    }

    #[test]
    fn exact_estimates_bracket_optimal_values() {
        let mdp = random_mdp(3, 2, 3, 4, true).unwrap();
        let th = Thresholds::new(3, 2, 3, 0.1).unwrap();
        let st = AgentState::from_estimates(Estimates::exact(&mdp, 1000), th, BonusVariant::Stochastic);
        let opt = optimal_values(&mdp);
        for (h, s, a) in mdp.shape().available_triplets() {
            let q = opt.values.q(h, s, a);
            assert!(st.lower_q(h, s, a) <= q + 1e-12);
            assert!(q <= st.upper_q(h, s, a) + 1e-12);
            assert!(st.upper_q(h, s, a) <= (4 - h) as f64);
            assert!(st.lower_q(h, s, a) >= 0.0);
        }
    }

    #[test]
    fn greedy_policy_bound_matches_maximum() {
        let mdp = random_mdp(3, 2, 3, 6, true).unwrap();
        let mut st = AgentState::new(mdp.shape(), 0.1, BonusVariant::Stochastic).unwrap();
        let pb = st.policy_confidence_bounds(st.sampling_rule());
        assert_eq!(pb.upper_v(1, 0), 3.0);
        assert_eq!(pb.lower_v(1, 0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let traj = sample_episode(&mdp, st.sampling_rule(), &mut rng);
            st.update_estimators(&traj);
            st.confidence_q_bounds();
        }
        let pi = st.sampling_rule().clone();
        let pb = st.policy_confidence_bounds(&pi);
        assert_eq!(pb.upper_v(1, 0), st.upper_v(1, 0));
    }
}
