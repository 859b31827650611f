//! UCBVI regret minimisation with exact regret tracking, the regret-to-PAC
//! conversion, and an empirical estimate of `T_eps`.
//!
//! Stages `h < H` use the BPI-UCRL bonus with `delta_t = 1/t^2`; stage `H` uses
//! `min(sqrt(2 ln(2SAH t^2) / n), 1)`, which covers 1-sub-Gaussian rewards.
//! Mean rewards are assumed to lie in `[0, 1]` and empirical means are projected
//! there; without the projection the capped bonus lets one bad early sample
//! starve an arm forever.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bpi::{Estimates, Thresholds};
use crate::mdp::{
    evaluate_policy, optimal_values, sample_episode_into, DeterministicPolicy, Mdp, MdpShape, Trajectory,
};

/// Episodes simulated per seed between two aggregation points of [`measure_t_epsilon`].
const LOCKSTEP_BLOCK: u64 = 4096;

/// `min(sqrt(2 ln(2SAH t^2) / n), 1)`; 1 when `n = 0`.
pub fn stage_h_bonus(n: u64, t: u64, num_states: usize, num_actions: usize, horizon: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let sah = (2 * num_states * num_actions * horizon) as f64;
    let t = t.max(1) as f64;
    (2.0 * (sah * t * t).ln() / n as f64).sqrt().min(1.0)
}

/// `(H-h+1) * min(sqrt(beta(n, 1/t^2) / n), 1)` for `h < H`; full range when `n = 0`.
pub fn early_stage_bonus(h: usize, n: u64, t: u64, num_states: usize, num_actions: usize, horizon: usize) -> f64 {
    let range = (horizon - h + 1) as f64;
    if n == 0 {
        return range;
    }
    let th = early_thresholds(t, num_states, num_actions, horizon);
    range * (th.beta(n as f64) / n as f64).sqrt().min(1.0)
}

fn early_thresholds(t: u64, num_states: usize, num_actions: usize, horizon: usize) -> Thresholds {
    let t = t.max(1) as f64;
    let log_term = ((3 * num_states * num_actions * horizon) as f64).ln() + 2.0 * t.ln();
    Thresholds::with_log_term(num_states, log_term)
}

/// UCBVI state after `episode()` episodes; `policy()` is the policy of the next one.
#[derive(Clone, Debug)]
pub struct UcbviState {
    est: Estimates,
    episode: u64,
    bonus: Vec<f64>,
    upper_q: Vec<f64>,
    upper_v: Vec<f64>,
    policy: DeterministicPolicy,
    cells: Vec<(usize, usize, usize)>,
    actions: Vec<(usize, usize)>,
    touched: Vec<usize>,
}

impl UcbviState {
    pub fn new(shape: &MdpShape) -> Self {
        let n = shape.num_triplets();
        let ns = shape.num_states();
        let mut cells = Vec::with_capacity(shape.horizon() * ns);
        let mut actions = Vec::new();
        for h in 1..=shape.horizon() {
            for s in 0..ns {
                let start = actions.len();
                actions.extend(shape.actions(h, s).iter().map(|&a| (a, shape.triplet_index(h, s, a))));
                cells.push((s, start, actions.len()));
            }
        }
        let mut state = UcbviState {
            est: Estimates::new(shape),
            episode: 0,
            bonus: vec![0.0; n],
            upper_q: vec![f64::NEG_INFINITY; n],
            upper_v: vec![0.0; (shape.horizon() + 1) * ns],
            policy: DeterministicPolicy::first_available(shape),
            cells,
            actions,
            touched: Vec::new(),
        };
        state.plan();
        state
    }

    pub fn shape(&self) -> &MdpShape {
        self.est.shape()
    }

    pub fn estimates(&self) -> &Estimates {
        &self.est
    }

    /// Episodes played so far.
    pub fn episode(&self) -> u64 {
        self.episode
    }

    /// Bonus used to plan episode `episode() + 1`.
    pub fn bonus(&self, h: usize, s: usize, a: usize) -> f64 {
        self.bonus[self.shape().triplet_index(h, s, a)]
    }

    pub fn upper_q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.upper_q[self.shape().triplet_index(h, s, a)]
    }

    pub fn upper_v(&self, h: usize, s: usize) -> f64 {
        self.upper_v[(h - 1) * self.shape().num_states() + s]
    }

    /// Greedy optimistic policy for episode `episode() + 1`.
    pub fn policy(&self) -> &DeterministicPolicy {
        &self.policy
    }

    /// Adds one trajectory and replans for the following episode.
    pub fn update(&mut self, traj: &Trajectory) {
        let mut touched = std::mem::take(&mut self.touched);
        self.est.update_into(traj, &mut touched);
        self.touched = touched;
        self.episode += 1;
        self.plan();
    }

    fn plan(&mut self) {
        let shape = self.est.shape();
        let (ns, na, horizon) = (shape.num_states(), shape.num_actions(), shape.horizon());
        let t = self.episode + 1;
        let th = early_thresholds(t, ns, na, horizon);
        let last_log = ((2 * ns * na * horizon) as f64).ln() + 2.0 * (t as f64).ln();
        for h in (1..=horizon).rev() {
            let cap = (horizon - h + 1) as f64;
            let (head, tail) = self.upper_v.split_at_mut(h * ns);
            let next_v = &tail[..ns];
            let cur_v = &mut head[(h - 1) * ns..];
            for &(s, start, end) in &self.cells[(h - 1) * ns..h * ns] {
                let mut best = f64::NEG_INFINITY;
                let mut best_a = 0;
                for &(a, i) in &self.actions[start..end] {
                    let n = self.est.count_at(i);
                    let q = if n == 0 {
                        self.bonus[i] = cap;
                        cap
                    } else {
                        let nf = n as f64;
                        let b = if h == horizon {
                            (2.0 * last_log / nf).sqrt().min(1.0)
                        } else {
                            cap * (th.beta(nf) / nf).sqrt().min(1.0)
                        };
                        self.bonus[i] = b;
                        let mut pv = 0.0;
                        for &(next, p) in self.est.support_at(i) {
                            pv += p * next_v[next];
                        }
                        (self.est.r_hat_at(i).clamp(0.0, 1.0) + b + pv).min(cap)
                    };
                    self.upper_q[i] = q;
                    if q > best {
                        best = q;
                        best_a = a;
                    }
                }
                cur_v[s] = best;
                self.policy.set_action(h, s, best_a);
            }
        }
    }
}

/// Plays one UCBVI episode: returns the played policy and the trajectory.
pub fn ucbvi_episode<R: Rng + ?Sized>(
    state: &mut UcbviState,
    mdp: &Mdp,
    rng: &mut R,
) -> (DeterministicPolicy, Trajectory) {
    let policy = state.policy.clone();
    let mut traj = Trajectory { steps: Vec::with_capacity(mdp.horizon()) };
    sample_episode_into(mdp, &policy, rng, &mut traj);
    state.update(&traj);
    (policy, traj)
}

/// Exact `V*_1(s_1) - V^pi_1(s_1)`, memoised per policy.
#[derive(Clone, Debug)]
struct RegretOracle {
    optimal: f64,
    cache: HashMap<DeterministicPolicy, f64>,
}

impl RegretOracle {
    fn new(mdp: &Mdp) -> Self {
        RegretOracle { optimal: optimal_values(mdp).values.v(1, mdp.initial_state()), cache: HashMap::new() }
    }

    fn regret(&mut self, mdp: &Mdp, pi: &DeterministicPolicy) -> f64 {
        if let Some(&r) = self.cache.get(pi) {
            return r;
        }
        let v = evaluate_policy(mdp, pi).expect("greedy policies respect the action masks");
        let r = self.optimal - v.v(1, mdp.initial_state());
        self.cache.insert(pi.clone(), r);
        r
    }
}

/// Per-episode record of a UCBVI run with exact regrets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegretTrace {
    pub optimal_value: f64,
    /// Distinct played policies in order of first play.
    pub policies: Vec<DeterministicPolicy>,
    /// Index into `policies` of the policy played at each episode.
    pub played: Vec<u32>,
    pub regret: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn len(&self) -> usize {
        self.regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regret.is_empty()
    }

    /// Policy played at episode `t` (1-based).
    pub fn policy(&self, t: usize) -> &DeterministicPolicy {
        &self.policies[self.played[t - 1] as usize]
    }

    /// `R(T) / T`.
    pub fn average(&self, t: usize) -> f64 {
        self.cumulative[t - 1] / t as f64
    }

    /// Columns `t,regret,cum_regret,avg_regret`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "regret", "cum_regret", "avg_regret"])?;
        for t in 1..=self.len() {
            w.write_record(&[
                t.to_string(),
                self.regret[t - 1].to_string(),
                self.cumulative[t - 1].to_string(),
                self.average(t).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Plays `episodes` UCBVI episodes and logs exact regrets.
pub fn run_regret<R: Rng + ?Sized>(mdp: &Mdp, episodes: usize, rng: &mut R) -> RegretTrace {
    let mut state = UcbviState::new(mdp.shape());
    let mut oracle = RegretOracle::new(mdp);
    let mut index: HashMap<DeterministicPolicy, u32> = HashMap::new();
    let mut trace = RegretTrace {
        optimal_value: oracle.optimal,
        policies: Vec::new(),
        played: Vec::with_capacity(episodes),
        regret: Vec::with_capacity(episodes),
        cumulative: Vec::with_capacity(episodes),
    };
    let mut traj = Trajectory { steps: Vec::with_capacity(mdp.horizon()) };
    let mut total = 0.0;
    for _ in 0..episodes {
        let idx = match index.get(&state.policy) {
            Some(&k) => k,
            None => {
                let k = trace.policies.len() as u32;
                index.insert(state.policy.clone(), k);
                trace.policies.push(state.policy.clone());
                k
            }
        };
        let r = oracle.regret(mdp, &state.policy);
        sample_episode_into(mdp, &state.policy, rng, &mut traj);
        state.update(&traj);
        total += r;
        trace.played.push(idx);
        trace.regret.push(r);
        trace.cumulative.push(total);
    }
    trace
}

/// Draws one of the played policies uniformly at random.
pub fn regret_to_pac_sample<R: Rng + ?Sized>(trace: &RegretTrace, rng: &mut R) -> DeterministicPolicy {
    assert!(!trace.is_empty(), "cannot draw from an empty trace");
    trace.policy(rng.random_range(1..=trace.len())).clone()
}

/// Fraction of `draws` uniform draws from the first `t` episodes whose policy is
/// more than `epsilon` suboptimal.
pub fn eps_bad_fraction<R: Rng + ?Sized>(
    trace: &RegretTrace,
    t: usize,
    epsilon: f64,
    draws: usize,
    rng: &mut R,
) -> f64 {
    assert!(t >= 1 && t <= trace.len(), "t must lie in 1..=len");
    let bad = (0..draws).filter(|_| trace.regret[rng.random_range(0..t)] > epsilon).count();
    bad as f64 / draws as f64
}

/// Seed-averaged `E[R(T)/T]` and the resulting `T_eps`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TEpsilonEstimate {
    pub epsilon: f64,
    pub delta: f64,
    pub t_max: u64,
    pub seeds: Vec<u64>,
    /// Entry `T-1` is the mean over seeds of `R(T)/T`.
    pub mean_average_regret: Vec<f64>,
    /// First `T` with mean average regret `<= eps * delta`; `None` when not reached by `t_max`.
    pub t_epsilon: Option<u64>,
}

impl TEpsilonEstimate {
    pub fn threshold(&self) -> f64 {
        self.epsilon * self.delta
    }

    /// First `T` with mean average regret at most `threshold`.
    pub fn first_crossing(&self, threshold: f64) -> Option<u64> {
        self.mean_average_regret.iter().position(|&r| r <= threshold).map(|k| k as u64 + 1)
    }

    /// Smallest `T` after which the curve stays at most `threshold` up to `t_max`.
    pub fn sustained_crossing(&self, threshold: f64) -> Option<u64> {
        match self.mean_average_regret.iter().rposition(|&r| r > threshold) {
            None => Some(1),
            Some(k) if k + 1 < self.mean_average_regret.len() => Some(k as u64 + 2),
            Some(_) => None,
        }
    }

    pub fn reached(&self) -> bool {
        self.t_epsilon.is_some()
    }
}

struct RegretRunner {
    state: UcbviState,
    oracle: RegretOracle,
    rng: ChaCha8Rng,
    traj: Trajectory,
    total: f64,
}

impl RegretRunner {
    fn advance(&mut self, mdp: &Mdp, episodes: u64) -> Vec<f64> {
        (0..episodes)
            .map(|_| {
                self.total += self.oracle.regret(mdp, &self.state.policy);
                sample_episode_into(mdp, &self.state.policy, &mut self.rng, &mut self.traj);
                self.state.update(&self.traj);
                self.total
            })
            .collect()
    }
}

/// Estimates `T_eps` from `num_seeds` traces whose seeds are drawn from `rng`.
pub fn measure_t_epsilon<R: Rng + ?Sized>(
    mdp: &Mdp,
    epsilon: f64,
    delta: f64,
    t_max: u64,
    num_seeds: usize,
    rng: &mut R,
) -> TEpsilonEstimate {
    let seeds: Vec<u64> = (0..num_seeds).map(|_| rng.random()).collect();
    measure_t_epsilon_with_seeds(mdp, epsilon, delta, t_max, &seeds)
}

/// As [`measure_t_epsilon`] with explicit per-trace seeds; traces run in
/// parallel, in lockstep blocks, and are averaged in seed order.
pub fn measure_t_epsilon_with_seeds(
    mdp: &Mdp,
    epsilon: f64,
    delta: f64,
    t_max: u64,
    seeds: &[u64],
) -> TEpsilonEstimate {
    assert!(!seeds.is_empty(), "at least one seed is required");
    let oracle = RegretOracle::new(mdp);
    let mut runners: Vec<RegretRunner> = seeds
        .iter()
        .map(|&seed| RegretRunner {
            state: UcbviState::new(mdp.shape()),
            oracle: oracle.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            traj: Trajectory { steps: Vec::with_capacity(mdp.horizon()) },
            total: 0.0,
        })
        .collect();
    let mut mean = Vec::with_capacity(t_max as usize);
    let mut done = 0;
    while done < t_max {
        let len = LOCKSTEP_BLOCK.min(t_max - done);
        let blocks: Vec<Vec<f64>> = runners.par_iter_mut().map(|r| r.advance(mdp, len)).collect();
        for k in 0..len as usize {
            let sum: f64 = blocks.iter().map(|b| b[k]).sum();
            let t = (done + k as u64 + 1) as f64;
            mean.push(sum / (seeds.len() as f64 * t));
        }
        done += len;
    }
    let threshold = epsilon * delta;
    let t_epsilon = mean.iter().position(|&r| r <= threshold).map(|k| k as u64 + 1);
    TEpsilonEstimate { epsilon, delta, t_max, seeds: seeds.to_vec(), mean_average_regret: mean, t_epsilon }
}
