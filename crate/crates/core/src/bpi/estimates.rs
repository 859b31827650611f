//! Empirical counts and maximum-likelihood estimators, built from trajectories only.

use crate::mdp::{Mdp, MdpShape, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct Estimates {
    shape: MdpShape,
    counts: Vec<u64>,
    reward_sums: Vec<f64>,
    next_counts: Vec<u64>,
    r_hat: Vec<f64>,
    p_hat: Vec<f64>,
    // observed (next state, p_hat) of triplet i, in order of first observation:
    // support[i*S..i*S+support_len[i]]
    support: Vec<(usize, f64)>,
    support_len: Vec<usize>,
}

impl Estimates {
    pub fn new(shape: &MdpShape) -> Self {
        let n = shape.num_triplets();
        let ns = shape.num_states();
        Estimates {
            shape: shape.clone(),
            counts: vec![0; n],
            reward_sums: vec![0.0; n],
            next_counts: vec![0; n * ns],
            r_hat: vec![0.0; n],
            p_hat: vec![0.0; n * ns],
            support: vec![(0, 0.0); n * ns],
            support_len: vec![0; n],
        }
    }

    /// Estimates equal to the true means and transitions, as if every available
    /// triplet had been visited `count` times. Test and diagnostic use only.
    pub fn exact(mdp: &Mdp, count: u64) -> Self {
        let mut est = Estimates::new(mdp.shape());
        let ns = mdp.num_states();
        for (h, s, a) in mdp.shape().available_triplets() {
            let i = est.shape.triplet_index(h, s, a);
            est.counts[i] = count;
            est.r_hat[i] = mdp.mean_reward(h, s, a);
            est.reward_sums[i] = est.r_hat[i] * count as f64;
            est.p_hat[i * ns..(i + 1) * ns].copy_from_slice(mdp.transition(h, s, a));
            let (states, probs) = mdp.successors(h, s, a);
            for (k, (&next, &p)) in states.iter().zip(probs).enumerate() {
                est.support[i * ns + k] = (next, p);
            }
            est.support_len[i] = states.len();
        }
        est
    }

    pub fn shape(&self) -> &MdpShape {
        &self.shape
    }

    #[inline]
    pub fn count(&self, h: usize, s: usize, a: usize) -> u64 {
        self.counts[self.shape.triplet_index(h, s, a)]
    }

    #[inline]
    pub fn r_hat(&self, h: usize, s: usize, a: usize) -> f64 {
        self.r_hat[self.shape.triplet_index(h, s, a)]
    }

    #[inline]
    pub fn p_hat(&self, h: usize, s: usize, a: usize) -> &[f64] {
        self.p_hat_at(self.shape.triplet_index(h, s, a))
    }

    pub fn reward_sum(&self, h: usize, s: usize, a: usize) -> f64 {
        self.reward_sums[self.shape.triplet_index(h, s, a)]
    }

    pub fn next_counts(&self, h: usize, s: usize, a: usize) -> &[u64] {
        let ns = self.shape.num_states();
        let i = self.shape.triplet_index(h, s, a);
        &self.next_counts[i * ns..(i + 1) * ns]
    }

    /// Counts in triplet-index order.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    pub(crate) fn count_at(&self, i: usize) -> u64 {
        self.counts[i]
    }

    #[inline]
    pub(crate) fn r_hat_at(&self, i: usize) -> f64 {
        self.r_hat[i]
    }

    #[inline]
    pub(crate) fn p_hat_at(&self, i: usize) -> &[f64] {
        let ns = self.shape.num_states();
        &self.p_hat[i * ns..(i + 1) * ns]
    }

    /// `(next state, p_hat)` over next states observed so far from triplet `i`.
    #[inline]
    pub(crate) fn support_at(&self, i: usize) -> &[(usize, f64)] {
        let ns = self.shape.num_states();
        &self.support[i * ns..i * ns + self.support_len[i]]
    }

    /// Adds one episode; returns the triplet index touched at each stage.
    pub fn update(&mut self, traj: &Trajectory) -> Vec<usize> {
        let mut touched = Vec::with_capacity(traj.steps.len());
        self.update_into(traj, &mut touched);
        touched
    }

    pub(crate) fn update_into(&mut self, traj: &Trajectory, touched: &mut Vec<usize>) {
        touched.clear();
        let ns = self.shape.num_states();
        for (k, step) in traj.steps.iter().enumerate() {
            let i = self.shape.triplet_index(k + 1, step.state, step.action);
            self.counts[i] += 1;
            self.reward_sums[i] += step.reward;
            self.next_counts[i * ns + step.next_state] += 1;
            if self.next_counts[i * ns + step.next_state] == 1 {
                self.support[i * ns + self.support_len[i]] = (step.next_state, 0.0);
                self.support_len[i] += 1;
            }
            let n = self.counts[i] as f64;
            self.r_hat[i] = self.reward_sums[i] / n;
            for (next, p) in &mut self.support[i * ns..i * ns + self.support_len[i]] {
                *p = self.next_counts[i * ns + *next] as f64 / n;
                self.p_hat[i * ns + *next] = *p;
            }
            touched.push(i);
        }
    }
}
