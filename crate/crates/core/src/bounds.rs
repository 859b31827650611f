//! Closed-form sample-complexity bounds and helper inequalities.
//!
//! Every function is pure. Unreachable triplets contribute nothing to the sums.
//! The values are conservative by orders of magnitude at small scale.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::bpi::Thresholds;
use crate::oracles::GapReport;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("no reachable triplet: the bound is undefined")]
    NoReachableTriplet,
    #[error("epsilon must be positive and finite (got {0})")]
    InvalidEpsilon(f64),
    #[error("delta must lie in (0, 1) (got {0})")]
    InvalidDelta(f64),
    #[error("the PAC lower bound needs delta < 1/4 (got {0})")]
    DeltaTooLarge(f64),
    #[error("log-inequality solver needs B, C >= 1 (got B = {b}, C = {c})")]
    InvalidLogInequality { b: f64, c: f64 },
    #[error("S, A and H must be at least 1")]
    EmptyDimensions,
}

fn check_eps_delta(epsilon: f64, delta: f64) -> Result<(), BoundsError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(BoundsError::InvalidEpsilon(epsilon));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BoundsError::InvalidDelta(delta));
    }
    Ok(())
}

fn dims(gaps: &GapReport) -> (usize, usize, usize) {
    let shape = gaps.shape();
    (shape.num_states(), shape.num_actions(), shape.horizon())
}

fn log_term(num_states: usize, num_actions: usize, horizon: usize, delta: f64) -> f64 {
    ((3 * num_states * num_actions * horizon) as f64 / delta).ln()
}

/// `H^4 / (p_min * max(cond_gap, eps)^2)` for every reachable triplet.
fn weights(gaps: &GapReport, epsilon: f64) -> impl Iterator<Item = ((usize, usize, usize), f64, f64, f64)> + '_ {
    let h4 = (gaps.shape().horizon() as f64).powi(4);
    gaps.iter().filter(|(_, g)| g.reachable).map(move |(key, g)| {
        let eff = g.cond_return_gap.max(epsilon);
        (key, g.p_min, g.cond_return_gap, h4 / (g.p_min * eff * eff))
    })
}

/// `C(eps) = sum H^4 / (p_min * max(cond_gap, eps)^2)`.
pub fn c_epsilon(gaps: &GapReport, epsilon: f64) -> Result<f64, BoundsError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(BoundsError::InvalidEpsilon(epsilon));
    }
    Ok(weights(gaps, epsilon).map(|(_, _, _, w)| w).sum())
}

/// One triplet's share of the instance-dependent bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TripletContribution {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub p_min: f64,
    pub cond_return_gap: f64,
    /// `H^4 / (p_min * max(cond_gap, eps)^2)`
    pub weight: f64,
    /// Term of the explicit bound.
    pub explicit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplicitBound {
    pub value: f64,
    pub p_min_global: f64,
    pub contributions: Vec<TripletContribution>,
}

/// Explicit instance-dependent bound on the stopping time:
/// `H^4 sum (720 L + 1729 S ln(1152 S^2 A H^5 L / (p_min_global eps^2))) / (p_min max(gap, eps)^2)`
/// with `L = ln(3SAH/delta)`.
pub fn theorem1_explicit_bound(gaps: &GapReport, delta: f64, epsilon: f64) -> Result<ExplicitBound, BoundsError> {
    check_eps_delta(epsilon, delta)?;
    let p_min_global = gaps.global_p_min().ok_or(BoundsError::NoReachableTriplet)?;
    let (ns, na, horizon) = dims(gaps);
    let (s, l) = (ns as f64, log_term(ns, na, horizon, delta));
    let inner = 1152.0 * s * s * na as f64 * (horizon as f64).powi(5) * l / (p_min_global * epsilon * epsilon);
    let numerator = 720.0 * l + 1729.0 * s * inner.ln();
    let contributions: Vec<_> = weights(gaps, epsilon)
        .map(|((h, s, a), p_min, gap, w)| TripletContribution {
            h,
            s,
            a,
            p_min,
            cond_return_gap: gap,
            weight: w,
            explicit: numerator * w,
        })
        .collect();
    let value = contributions.iter().map(|c| c.explicit).sum();
    Ok(ExplicitBound { value, p_min_global, contributions })
}

/// Right side of `tau <= sum 144 H^4 beta(tau-1) / (p_min max(gap, eps)^2) + 1`.
pub fn theorem1_implicit_rhs(tau: u64, gaps: &GapReport, delta: f64, epsilon: f64) -> Result<f64, BoundsError> {
    check_eps_delta(epsilon, delta)?;
    let (ns, na, horizon) = dims(gaps);
    let th = Thresholds::new(ns, na, horizon, delta).map_err(|_| BoundsError::InvalidDelta(delta))?;
    let c = c_epsilon(gaps, epsilon)?;
    Ok(144.0 * th.beta(tau.saturating_sub(1) as f64) * c + 1.0)
}

pub fn theorem1_implicit_check(tau: u64, gaps: &GapReport, delta: f64, epsilon: f64) -> Result<bool, BoundsError> {
    Ok(tau as f64 <= theorem1_implicit_rhs(tau, gaps, delta, epsilon)?)
}

/// Largest `tau` satisfying the implicit inequality, found by iterating
/// `tau <- rhs(tau)` from 1 (the right side grows only logarithmically).
pub fn implicit_fixed_point(gaps: &GapReport, delta: f64, epsilon: f64) -> Result<f64, BoundsError> {
    if gaps.global_p_min().is_none() {
        return Err(BoundsError::NoReachableTriplet);
    }
    let (ns, na, horizon) = dims(gaps);
    check_eps_delta(epsilon, delta)?;
    let th = Thresholds::new(ns, na, horizon, delta).map_err(|_| BoundsError::InvalidDelta(delta))?;
    let c = c_epsilon(gaps, epsilon)?;
    let rhs = |tau: f64| 144.0 * th.beta((tau - 1.0).max(0.0)) * c + 1.0;
    let mut tau = 1.0;
    for _ in 0..10_000 {
        let next = rhs(tau);
        if (next - tau).abs() <= 1e-9 * next {
            return Ok(next.floor());
        }
        tau = next;
    }
    Ok(tau.floor())
}

/// The last line of the derivation from the implicit to the explicit bound:
/// `1729 C S ln(1152 C S L) + 720 C L`.
pub fn chain_bound(gaps: &GapReport, delta: f64, epsilon: f64) -> Result<f64, BoundsError> {
    check_eps_delta(epsilon, delta)?;
    if gaps.global_p_min().is_none() {
        return Err(BoundsError::NoReachableTriplet);
    }
    let (ns, na, horizon) = dims(gaps);
    let (s, l) = (ns as f64, log_term(ns, na, horizon, delta));
    let c = c_epsilon(gaps, epsilon)?;
    Ok(1729.0 * c * s * (1152.0 * c * s * l).ln() + 720.0 * c * l)
}

/// Order-level reference `S A H^4 ln(1/delta) / eps^2` (constants dropped).
pub fn worst_case_bound(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    delta: f64,
    epsilon: f64,
) -> Result<f64, BoundsError> {
    check_eps_delta(epsilon, delta)?;
    let sah4 = (num_states * num_actions) as f64 * (horizon as f64).powi(4);
    Ok(sah4 * (1.0 / delta).ln() / (epsilon * epsilon))
}

/// Upper bound on the regret-based sample complexity of the tree instance:
/// `(2/(eps^2 delta)) (36 ln(2SAH) + 16 ln(17/(eps^2 delta)) + 9 eps^2) + 1`.
pub fn theorem2_t_eps_bound(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    epsilon: f64,
    delta: f64,
) -> Result<f64, BoundsError> {
    check_eps_delta(epsilon, delta)?;
    let e2d = epsilon * epsilon * delta;
    let sah = (2 * num_states * num_actions * horizon) as f64;
    Ok(2.0 / e2d * (36.0 * sah.ln() + 16.0 * (17.0 / e2d).ln() + 9.0 * epsilon * epsilon) + 1.0)
}

/// Expected stopping time of any `(eps, delta)`-PAC algorithm on the tree instance
/// is at least `S A ln(1/(4 delta)) / (16 eps^2)`.
pub fn pac_lower_bound(num_states: usize, num_actions: usize, epsilon: f64, delta: f64) -> Result<f64, BoundsError> {
    check_eps_delta(epsilon, delta)?;
    if delta >= 0.25 {
        return Err(BoundsError::DeltaTooLarge(delta));
    }
    Ok((num_states * num_actions) as f64 * (1.0 / (4.0 * delta)).ln() / (16.0 * epsilon * epsilon))
}

/// Any `k >= 1` with `k <= B ln k + C` satisfies `k <= B ln(B^2 + 2C) + C`.
pub fn solve_log_inequality(b: f64, c: f64) -> Result<f64, BoundsError> {
    if !(b >= 1.0 && c >= 1.0 && b.is_finite() && c.is_finite()) {
        return Err(BoundsError::InvalidLogInequality { b, c });
    }
    Ok(b * (b * b + 2.0 * c).ln() + c)
}

/// `5 ln(3SAH/delta) + 4S + 4S ln t`, an upper bound on `beta(t-1, delta)` for `t >= 1`, `S >= 2`.
pub fn beta_upper(t: f64, num_states: usize, num_actions: usize, horizon: usize, delta: f64) -> f64 {
    let s = num_states as f64;
    5.0 * log_term(num_states, num_actions, horizon, delta) + 4.0 * s + 4.0 * s * t.ln()
}

/// `sum_{j=0}^{z-1} (j p_min v 1)^{-1/2}`: the left side of the pigeon-hole
/// inequality, which only depends on how many times a triplet was targeted.
pub fn pigeon_hole_sum(z: u64, p_min: f64) -> f64 {
    (0..z).map(|j| 1.0 / (j as f64 * p_min).max(1.0).sqrt()).sum()
}

/// `2 sqrt(z / p_min)`.
pub fn pigeon_hole_bound(z: u64, p_min: f64) -> f64 {
    2.0 * (z as f64 / p_min).sqrt()
}

/// `64 H^4 beta(T) / (p_min cond_gap^2)`; infinite when the gap is zero.
pub fn targeting_bound_gap(t: u64, p_min: f64, cond_gap: f64, thresholds: &Thresholds, horizon: usize) -> f64 {
    64.0 * (horizon as f64).powi(4) * thresholds.beta(t as f64) / (p_min * cond_gap * cond_gap)
}

/// `144 H^4 beta(T) / (p_min max(cond_gap, eps)^2)`; covers both targeting bounds
/// since `64/gap^2 <= 144/gap^2`.
pub fn targeting_bound(
    t: u64,
    p_min: f64,
    cond_gap: f64,
    epsilon: f64,
    thresholds: &Thresholds,
    horizon: usize,
) -> f64 {
    let eff = cond_gap.max(epsilon);
    144.0 * (horizon as f64).powi(4) * thresholds.beta(t as f64) / (p_min * eff * eff)
}

/// Every bound for one instance at `(eps, delta)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub c_epsilon: f64,
    pub theorem1_explicit: f64,
    pub theorem1_implicit_fixed_point: f64,
    pub chain: f64,
    pub worst_case: f64,
    pub theorem2_t_eps: f64,
    /// `None` when `delta >= 1/4`.
    pub pac_lower_bound: Option<f64>,
    pub p_min_global: f64,
    pub contributions: Vec<TripletContribution>,
}

pub fn bound_report(gaps: &GapReport, delta: f64, epsilon: f64) -> Result<BoundReport, BoundsError> {
    let (ns, na, horizon) = dims(gaps);
    let explicit = theorem1_explicit_bound(gaps, delta, epsilon)?;
    Ok(BoundReport {
        num_states: ns,
        num_actions: na,
        horizon,
        epsilon,
        delta,
        c_epsilon: c_epsilon(gaps, epsilon)?,
        theorem1_explicit: explicit.value,
        theorem1_implicit_fixed_point: implicit_fixed_point(gaps, delta, epsilon)?,
        chain: chain_bound(gaps, delta, epsilon)?,
        worst_case: worst_case_bound(ns, na, horizon, delta, epsilon)?,
        theorem2_t_eps: theorem2_t_eps_bound(ns, na, horizon, epsilon, delta)?,
        pac_lower_bound: pac_lower_bound(ns, na, epsilon, delta).ok(),
        p_min_global: explicit.p_min_global,
        contributions: explicit.contributions,
    })
}

impl BoundReport {
    /// `bound,value` rows.
    pub fn summary_rows(&self) -> Vec<(&'static str, f64)> {
        let mut rows = vec![
            ("c_epsilon", self.c_epsilon),
            ("theorem1_explicit", self.theorem1_explicit),
            ("theorem1_implicit_fixed_point", self.theorem1_implicit_fixed_point),
            ("chain", self.chain),
            ("worst_case_order", self.worst_case),
            ("theorem2_t_eps", self.theorem2_t_eps),
            ("p_min_global", self.p_min_global),
        ];
        if let Some(lb) = self.pac_lower_bound {
            rows.push(("pac_lower_bound", lb));
        }
        rows
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bound", "value"])?;
        for (name, value) in self.summary_rows() {
            w.write_record([name.to_string(), value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_contributions_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.contributions {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}
