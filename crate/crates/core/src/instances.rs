//! Benchmark MDP constructors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::mdp::{Mdp, MdpBuilder, RewardModel};

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("tree instance needs S >= 4 (got S = {0})")]
    TooFewStates(usize),
    #[error("tree instance needs A >= 2 (got A = {0})")]
    TooFewActions(usize),
    #[error("tree instance needs H >= ceil(log2(S)) + 1 = {required} (got H = {horizon})")]
    HorizonTooShort { horizon: usize, required: usize },
    #[error("reward gap must lie in (0, 1] (got {0})")]
    InvalidGap(f64),
    #[error("reward variance must be positive (got {0})")]
    InvalidVariance(f64),
    #[error("random MDPs need S, A, H >= 1")]
    EmptyDimensions,
}

/// Reward distributions used on the tree instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TreeRewards {
    /// Gaussian with the given variance around every mean.
    Gaussian { variance: f64 },
    /// Bernoulli rewards (zero-mean triplets never pay out); needed by BPI-UCRL.
    Bernoulli,
}

/// Parameters of the binary-tree instance where every path is optimal and only
/// the last decision matters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub gap: f64,
    pub rewards: TreeRewards,
}

impl TreeSpec {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, gap: f64) -> Self {
        TreeSpec { num_states, num_actions, horizon, gap, rewards: TreeRewards::Gaussian { variance: 1.0 } }
    }

    pub fn bernoulli(mut self) -> Self {
        self.rewards = TreeRewards::Bernoulli;
        self
    }

    /// `ceil(log2(S))`.
    pub fn depth(&self) -> usize {
        self.num_states.next_power_of_two().trailing_zeros() as usize
    }

    /// Index of the only state that holds a rewarded action.
    pub fn reward_state(&self) -> usize {
        self.num_states - 1
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.num_states < 4 {
            return Err(InstanceError::TooFewStates(self.num_states));
        }
        if self.num_actions < 2 {
            return Err(InstanceError::TooFewActions(self.num_actions));
        }
        let required = self.depth() + 1;
        if self.horizon < required {
            return Err(InstanceError::HorizonTooShort { horizon: self.horizon, required });
        }
        if !(self.gap > 0.0 && self.gap <= 1.0) {
            return Err(InstanceError::InvalidGap(self.gap));
        }
        if let TreeRewards::Gaussian { variance } = self.rewards {
            if !(variance > 0.0 && variance.is_finite()) {
                return Err(InstanceError::InvalidVariance(variance));
            }
        }
        Ok(())
    }

    fn reward(&self, mean: f64) -> RewardModel {
        match self.rewards {
            TreeRewards::Gaussian { variance } => RewardModel::Gaussian { mean, variance },
            TreeRewards::Bernoulli => RewardModel::Bernoulli { mean },
        }
    }
}

/// Builds the binary-tree instance.
///
/// States are numbered breadth-first with the root at 0; node `i` has children
/// `2i+1` and `2i+2` when they exist. Before stage `H-1`, a reachable node with two
/// children exposes exactly actions {0: left, 1: right}; a node with one child
/// exposes all actions, action 0 descending and the rest self-looping; a childless
/// node exposes all actions as self-loops. At stage `H-1` every reachable state
/// sends every action to the reward state (index `S-1`), which offers two actions
/// at stage `H`: action 0 with mean `gap`, action 1 with mean 0. Cells that are
/// unreachable at their stage get a single self-loop action.
#[allow(clippy::needless_range_loop)]
pub fn tree_mdp(spec: &TreeSpec) -> Result<Mdp, InstanceError> {
    spec.validate()?;
    let (ns, na, horizon) = (spec.num_states, spec.num_actions, spec.horizon);
    let goal = spec.reward_state();
    let all: Vec<usize> = (0..na).collect();
    let zero = spec.reward(0.0);
    let mut b = MdpBuilder::new(ns, na, horizon);
    let mut reachable = vec![false; ns];
    reachable[0] = true;

    for h in 1..horizon {
        let mut next_reachable = vec![false; ns];
        for s in 0..ns {
            if !reachable[s] {
                let target = if h == horizon - 1 { goal } else { s };
                b.mask(h, s, vec![0]).deterministic_transition(h, s, 0, target).reward(h, s, 0, zero);
                continue;
            }
            let children: Vec<usize> = [2 * s + 1, 2 * s + 2].into_iter().filter(|&c| c < ns).collect();
            let (mask, targets): (Vec<usize>, Vec<usize>) = if h == horizon - 1 {
                (all.clone(), vec![goal; na])
            } else {
                match children.len() {
                    2 => (vec![0, 1], children.clone()),
                    1 => (all.clone(), (0..na).map(|a| if a == 0 { children[0] } else { s }).collect()),
                    _ => (all.clone(), vec![s; na]),
                }
            };
            for (&a, &target) in mask.iter().zip(&targets) {
                b.deterministic_transition(h, s, a, target).reward(h, s, a, zero);
                next_reachable[target] = true;
            }
            b.mask(h, s, mask);
        }
        reachable = next_reachable;
    }

    for s in 0..ns {
        if s == goal {
            b.mask(horizon, s, vec![0, 1])
                .deterministic_transition(horizon, s, 0, s)
                .deterministic_transition(horizon, s, 1, s)
                .reward(horizon, s, 0, spec.reward(spec.gap))
                .reward(horizon, s, 1, zero);
        } else {
            b.mask(horizon, s, vec![0]).deterministic_transition(horizon, s, 0, s).reward(horizon, s, 0, zero);
        }
    }
    Ok(b.build().expect("tree construction produces a valid MDP"))
}

/// Random MDP with Bernoulli rewards whose means are uniform on `[0, 1]`.
///
/// Stochastic instances draw each transition row from a symmetric Dirichlet(1);
/// deterministic ones pick a uniformly random next state. The initial state is 0.
pub fn random_mdp(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    seed: u64,
    stochastic: bool,
) -> Result<Mdp, InstanceError> {
    if num_states == 0 || num_actions == 0 || horizon == 0 {
        return Err(InstanceError::EmptyDimensions);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = MdpBuilder::new(num_states, num_actions, horizon);
    let mut row = vec![0.0; num_states];
    for h in 1..=horizon {
        for s in 0..num_states {
            for a in 0..num_actions {
                if stochastic {
                    for p in row.iter_mut() {
                        *p = rng.sample::<f64, _>(Exp1);
                    }
                    let total: f64 = row.iter().sum();
                    row.iter_mut().for_each(|p| *p /= total);
                    b.transition(h, s, a, &row);
                } else {
                    b.deterministic_transition(h, s, a, rng.random_range(0..num_states));
                }
                let mean: f64 = rng.random();
                b.reward(h, s, a, RewardModel::Bernoulli { mean });
            }
        }
    }
    Ok(b.build().expect("random MDP is valid by construction"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{evaluate_policy, optimal_values, visitation_probabilities, DeterministicPolicy};
    use crate::mdp_file::to_json_string;

    #[test]
    fn rejects_each_parameter_constraint() {
        assert_eq!(tree_mdp(&TreeSpec::new(3, 3, 4, 0.5)).unwrap_err(), InstanceError::TooFewStates(3));
        assert_eq!(tree_mdp(&TreeSpec::new(8, 1, 4, 0.5)).unwrap_err(), InstanceError::TooFewActions(1));
        assert_eq!(
            tree_mdp(&TreeSpec::new(8, 3, 3, 0.5)).unwrap_err(),
            InstanceError::HorizonTooShort { horizon: 3, required: 4 }
        );
        assert_eq!(tree_mdp(&TreeSpec::new(8, 3, 4, 0.0)).unwrap_err(), InstanceError::InvalidGap(0.0));
    }

    #[test]
    fn eight_state_tree_layout() {
        let spec = TreeSpec::new(8, 3, 4, 0.5);
        let mdp = tree_mdp(&spec).unwrap();
        assert!(mdp.is_deterministic());
        assert_eq!(mdp.actions(1, 0), &[0, 1]);
        assert_eq!(mdp.transition(1, 0, 0)[1], 1.0);
        assert_eq!(mdp.transition(1, 0, 1)[2], 1.0);
        for s in 3..7 {
            assert_eq!(mdp.actions(3, s), &[0, 1, 2]);
            for a in 0..3 {
                assert_eq!(mdp.transition(3, s, a)[7], 1.0);
            }
        }
        assert_eq!(mdp.actions(4, 7), &[0, 1]);
        assert_eq!(mdp.mean_reward(4, 7, 0), 0.5);
        assert_eq!(mdp.mean_reward(4, 7, 1), 0.0);
        let opt = optimal_values(&mdp);
        assert_eq!(opt.values.v(1, 0), 0.5);
    }

    #[test]
    fn second_last_layer_has_enough_full_states() {
        for (ns, horizon) in [(4, 3), (5, 4), (8, 4), (9, 5), (16, 5), (13, 6)] {
            let spec = TreeSpec::new(ns, 3, horizon, 0.3);
            let mdp = tree_mdp(&spec).unwrap();
            let pi = DeterministicPolicy::first_available(mdp.shape());
            // any policy reaches the reward state at stage H
            let vt = visitation_probabilities(&mdp, &pi, None).unwrap();
            assert_eq!(vt.state(horizon, spec.reward_state()), 1.0);
            // count states reachable at H-1 (under some policy) exposing all actions
            let mut reach = vec![false; ns];
            reach[0] = true;
            for h in 1..horizon - 1 {
                let mut next = vec![false; ns];
                for s in (0..ns).filter(|&s| reach[s]) {
                    for &a in mdp.actions(h, s) {
                        let row = mdp.transition(h, s, a);
                        next[row.iter().position(|&p| p == 1.0).unwrap()] = true;
                    }
                }
                reach = next;
            }
            let m = (0..ns).filter(|&s| reach[s] && mdp.actions(horizon - 1, s).len() == 3).count();
            assert!(4 * m >= ns, "S={ns}: m={m}");
        }
    }

    #[test]
    fn any_policy_taking_rewarded_action_is_optimal() {
        let mdp = tree_mdp(&TreeSpec::new(8, 3, 5, 0.4)).unwrap();
        let mut pi = DeterministicPolicy::first_available(mdp.shape());
        for s in 0..8 {
            let acts = mdp.actions(2, s);
            pi.set_action(2, s, *acts.last().unwrap());
        }
        assert!((evaluate_policy(&mdp, &pi).unwrap().v(1, 0) - 0.4).abs() < 1e-15);
        pi.set_action(5, 7, 1);
        assert_eq!(evaluate_policy(&mdp, &pi).unwrap().v(1, 0), 0.0);
    }

    #[test]
    fn random_instances_are_reproducible_and_valid() {
        let a = random_mdp(3, 2, 3, 0, true).unwrap();
        let b = random_mdp(3, 2, 3, 0, true).unwrap();
        assert_eq!(to_json_string(&a), to_json_string(&b));
        assert_ne!(to_json_string(&a), to_json_string(&random_mdp(3, 2, 3, 1, true).unwrap()));
        for h in 1..=3 {
            for s in 0..3 {
                for act in 0..2 {
                    let sum: f64 = a.transition(h, s, act).iter().sum();
                    assert!((sum - 1.0).abs() <= 1e-12);
                }
            }
        }
        let d = random_mdp(4, 3, 3, 9, false).unwrap();
        assert!(d.is_deterministic());
        for (h, s, act) in d.shape().available_triplets() {
            assert_eq!(d.transition(h, s, act).iter().filter(|&&p| p == 1.0).count(), 1);
        }
    }
}
