//! Exact instance-dependent quantities by dynamic programming and bounded
//! brute-force enumeration of deterministic policies.
//!
//! Unreachable triplets (no deterministic policy visits them with positive
//! probability) carry `+inf` in `p_min`, the return gap and the conditional
//! return gap, and `reachable == false`.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use thiserror::Error;

use crate::mdp::{optimal_values, policy_values_into, propagate_states, DeterministicPolicy, Mdp, MdpShape};

pub const DEFAULT_MAX_POLICIES: u64 = 10_000_000;

/// Tolerance of the gap-ordering checks.
pub const ORDERING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration needs {required} policies but the budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },
    #[error("stage range {start}..={end} is outside 1..={horizon}")]
    BadStageRange { start: usize, end: usize, horizon: usize },
}

/// Hard cap on the number of policies an oracle may enumerate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_policies: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget { max_policies: DEFAULT_MAX_POLICIES }
    }
}

/// Dense per-`(h, s, a)` table; entries of unavailable actions are meaningless.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletTable<T> {
    shape: MdpShape,
    data: Vec<T>,
}

impl<T: Copy> TripletTable<T> {
    pub fn filled(shape: &MdpShape, value: T) -> Self {
        TripletTable { shape: shape.clone(), data: vec![value; shape.num_triplets()] }
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> T {
        self.data[self.shape.triplet_index(h, s, a)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, s: usize, a: usize, value: T) {
        let i = self.shape.triplet_index(h, s, a);
        self.data[i] = value;
    }

    pub fn shape(&self) -> &MdpShape {
        &self.shape
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `(h, s, a, value)` over available triplets.
    pub fn iter_available(&self) -> impl Iterator<Item = (usize, usize, usize, T)> + '_ {
        self.shape.available_triplets().map(move |(h, s, a)| (h, s, a, self.get(h, s, a)))
    }
}

/// The space of deterministic policies whose actions vary over a set of stages.
///
/// Cells outside the varying stages hold their lowest available action.
#[derive(Clone, Debug)]
pub struct PolicySpace {
    base: DeterministicPolicy,
    cells: Vec<(usize, usize)>,
    radices: Vec<usize>,
    actions: Vec<Vec<usize>>,
    len: u64,
}

impl PolicySpace {
    pub fn new(
        shape: &MdpShape,
        budget: EnumerationBudget,
        stages: Option<RangeInclusive<usize>>,
    ) -> Result<Self, OracleError> {
        let horizon = shape.horizon();
        let stages = stages.unwrap_or(1..=horizon);
        if stages.is_empty() {
            // nothing varies
        } else if *stages.start() < 1 || *stages.end() > horizon {
            return Err(OracleError::BadStageRange { start: *stages.start(), end: *stages.end(), horizon });
        }
        let mut cells = Vec::new();
        let mut radices = Vec::new();
        let mut actions = Vec::new();
        let mut required: u128 = 1;
        for h in stages {
            for s in 0..shape.num_states() {
                let acts = shape.actions(h, s);
                if acts.len() > 1 {
                    cells.push((h, s));
                    radices.push(acts.len());
                    actions.push(acts.to_vec());
                    required = required.saturating_mul(acts.len() as u128);
                }
            }
        }
        if required > budget.max_policies as u128 {
            return Err(OracleError::BudgetExceeded { required, budget: budget.max_policies });
        }
        Ok(PolicySpace {
            base: DeterministicPolicy::first_available(shape),
            cells,
            radices,
            actions,
            len: required as u64,
        })
    }

    /// Number of distinct policies.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Decodes a mixed-radix index (first cell varies fastest).
    pub fn policy_at(&self, index: u64) -> DeterministicPolicy {
        let mut policy = self.base.clone();
        let mut digits = vec![0; self.cells.len()];
        self.decode(index, &mut digits, &mut policy);
        policy
    }

    fn decode(&self, mut index: u64, digits: &mut [usize], policy: &mut DeterministicPolicy) {
        for (i, &(h, s)) in self.cells.iter().enumerate() {
            let r = self.radices[i] as u64;
            digits[i] = (index % r) as usize;
            index /= r;
            policy.set_action(h, s, self.actions[i][digits[i]]);
        }
    }

    /// Moves to the next policy in index order; false after the last one.
    fn advance(&self, digits: &mut [usize], policy: &mut DeterministicPolicy) -> bool {
        for (i, &(h, s)) in self.cells.iter().enumerate() {
            digits[i] += 1;
            if digits[i] < self.radices[i] {
                policy.set_action(h, s, self.actions[i][digits[i]]);
                return true;
            }
            digits[i] = 0;
            policy.set_action(h, s, self.actions[i][0]);
        }
        false
    }

    /// Streams every policy exactly once, in index order.
    pub fn iter(&self) -> PolicyIter<'_> {
        PolicyIter { space: self, digits: vec![0; self.cells.len()], current: Some(self.base.clone()) }
    }

    /// Visits policies with indices in `range`, in order.
    pub fn for_each_in(&self, range: std::ops::Range<u64>, mut f: impl FnMut(&DeterministicPolicy)) {
        if range.is_empty() {
            return;
        }
        let mut digits = vec![0; self.cells.len()];
        let mut policy = self.base.clone();
        self.decode(range.start, &mut digits, &mut policy);
        for _ in range {
            f(&policy);
            self.advance(&mut digits, &mut policy);
        }
    }

    /// Splits the index space into contiguous chunks, folds each chunk in parallel
    /// and merges the partial results.
    pub fn par_fold<A, I, F, M>(&self, init: I, fold: F, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync,
        F: Fn(&mut A, &DeterministicPolicy) + Sync,
        M: Fn(A, A) -> A + Sync,
    {
        let chunks = (rayon::current_num_threads() as u64 * 8).clamp(1, self.len.max(1));
        let step = self.len.div_ceil(chunks);
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let start = (c * step).min(self.len);
                let end = ((c + 1) * step).min(self.len);
                let mut acc = init();
                self.for_each_in(start..end, |pi| fold(&mut acc, pi));
                acc
            })
            .reduce(&init, &merge)
    }
}

pub struct PolicyIter<'a> {
    space: &'a PolicySpace,
    digits: Vec<usize>,
    current: Option<DeterministicPolicy>,
}

impl Iterator for PolicyIter<'_> {
    type Item = DeterministicPolicy;

    fn next(&mut self) -> Option<DeterministicPolicy> {
        let current = self.current.take()?;
        let mut next = current.clone();
        if self.space.advance(&mut self.digits, &mut next) {
            self.current = Some(next);
        }
        Some(current)
    }
}

/// Streams all deterministic policies, varying only `restrict_stages` if given.
pub fn enumerate_policies(
    mdp: &Mdp,
    budget: EnumerationBudget,
    restrict_stages: Option<RangeInclusive<usize>>,
) -> Result<PolicySpace, OracleError> {
    PolicySpace::new(mdp.shape(), budget, restrict_stages)
}

/// `Delta_h(s, a) = V*_h(s) - Q*_h(s, a)`.
pub fn value_gaps(mdp: &Mdp) -> TripletTable<f64> {
    let opt = optimal_values(mdp);
    let mut table = TripletTable::filled(mdp.shape(), f64::NAN);
    for (h, s, a) in mdp.shape().available_triplets() {
        table.set(h, s, a, (opt.values.v(h, s) - opt.values.q(h, s, a)).max(0.0));
    }
    table
}

/// Minimum positive and maximum visitation probability of each triplet.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitationExtremes {
    pub p_min: TripletTable<f64>,
    pub p_max: TripletTable<f64>,
    pub reachable: TripletTable<bool>,
}

/// `p_min` / `p_max` per triplet. Only stages before `h` (plus the choice
/// `pi_h(s) = a`) influence `p_h^pi(s, a)`, so stage `h` enumerates prefixes only.
pub fn min_max_visitation(mdp: &Mdp, budget: EnumerationBudget) -> Result<VisitationExtremes, OracleError> {
    let shape = mdp.shape();
    let (ns, horizon) = (mdp.num_states(), mdp.horizon());
    let mut p_min = TripletTable::filled(shape, f64::INFINITY);
    let mut p_max = TripletTable::filled(shape, 0.0);
    for h in 1..=horizon {
        // empty for h = 1: a single policy
        let space = PolicySpace::new(shape, budget, Some(1..=h - 1))?;
        let (lo, hi) = space.par_fold(
            || (vec![f64::INFINITY; ns], vec![0.0f64; ns]),
            |(lo, hi), pi| {
                let mut probs = vec![0.0; horizon * ns];
                probs[mdp.initial_state()] = 1.0;
                propagate_prefix(mdp, pi, h, &mut probs);
                for s in 0..ns {
                    let p = probs[(h - 1) * ns + s];
                    if p > 0.0 {
                        lo[s] = lo[s].min(p);
                        hi[s] = hi[s].max(p);
                    }
                }
            },
            |(mut lo1, mut hi1), (lo2, hi2)| {
                for s in 0..ns {
                    lo1[s] = lo1[s].min(lo2[s]);
                    hi1[s] = hi1[s].max(hi2[s]);
                }
                (lo1, hi1)
            },
        );
        for s in 0..ns {
            for &a in shape.actions(h, s) {
                p_min.set(h, s, a, lo[s]);
                p_max.set(h, s, a, hi[s]);
            }
        }
    }
    let mut reachable = TripletTable::filled(shape, false);
    for (h, s, a) in shape.available_triplets() {
        reachable.set(h, s, a, p_max.get(h, s, a) > 0.0);
    }
    Ok(VisitationExtremes { p_min, p_max, reachable })
}

fn propagate_prefix(mdp: &Mdp, pi: &DeterministicPolicy, upto: usize, probs: &mut [f64]) {
    let ns = mdp.num_states();
    for h in 1..upto {
        let (head, tail) = probs.split_at_mut(h * ns);
        let cur = &head[(h - 1) * ns..];
        let next = &mut tail[..ns];
        next.fill(0.0);
        for (s, &mass) in cur.iter().enumerate() {
            if mass > 0.0 {
                let (states, probs) = mdp.successors(h, s, pi.action(h, s));
                for (&n, p) in states.iter().zip(probs) {
                    next[n] += mass * p;
                }
            }
        }
    }
}

/// Every gap quantity of one triplet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripletGaps {
    pub value_gap: f64,
    pub return_gap: f64,
    pub cond_return_gap: f64,
    /// `V*_h(s) - max { V^pi_h(s) : p_h^pi(s, a) > 0 }`, the middle term of the
    /// chain `cond_return_gap >= this = value_gap`.
    pub visiting_value_gap: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub reachable: bool,
}

/// Gap quantities for every available triplet.
#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    shape: MdpShape,
    entries: Vec<Option<TripletGaps>>,
    pub optimal_value: f64,
    pub deterministic: bool,
    pub policies_enumerated: u64,
}

impl GapReport {
    pub fn get(&self, h: usize, s: usize, a: usize) -> Option<&TripletGaps> {
        self.entries[self.shape.triplet_index(h, s, a)].as_ref()
    }

    pub fn shape(&self) -> &MdpShape {
        &self.shape
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), &TripletGaps)> + '_ {
        self.shape.available_triplets().map(move |(h, s, a)| ((h, s, a), self.get(h, s, a).expect("available triplet")))
    }

    /// Minimum `p_min` over reachable triplets.
    pub fn global_p_min(&self) -> Option<f64> {
        self.iter().filter(|(_, g)| g.reachable).map(|(_, g)| g.p_min).min_by(f64::total_cmp)
    }

    pub fn num_reachable(&self) -> usize {
        self.iter().filter(|(_, g)| g.reachable).count()
    }

    /// CSV with columns `h,s,a,value_gap,return_gap,cond_return_gap,p_min,p_max,unreachable`;
    /// `+inf` sentinels are written as `inf`.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["h", "s", "a", "value_gap", "return_gap", "cond_return_gap", "p_min", "p_max", "unreachable"])?;
        let fmt = |x: f64| if x.is_infinite() { "inf".to_string() } else { x.to_string() };
        for ((h, s, a), g) in self.iter() {
            w.write_record([
                h.to_string(),
                s.to_string(),
                a.to_string(),
                fmt(g.value_gap),
                fmt(g.return_gap),
                fmt(g.cond_return_gap),
                fmt(g.p_min),
                fmt(g.p_max),
                (!g.reachable).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone)]
struct GapAccumulator {
    cond: Vec<f64>,
    best_return: Vec<f64>,
    best_visit_value: Vec<f64>,
    p_min: Vec<f64>,
    p_max: Vec<f64>,
}

impl GapAccumulator {
    fn new(n: usize) -> Self {
        GapAccumulator {
            cond: vec![f64::INFINITY; n],
            best_return: vec![f64::NEG_INFINITY; n],
            best_visit_value: vec![f64::NEG_INFINITY; n],
            p_min: vec![f64::INFINITY; n],
            p_max: vec![0.0; n],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for i in 0..self.cond.len() {
            self.cond[i] = self.cond[i].min(other.cond[i]);
            self.best_return[i] = self.best_return[i].max(other.best_return[i]);
            self.best_visit_value[i] = self.best_visit_value[i].max(other.best_visit_value[i]);
            self.p_min[i] = self.p_min[i].min(other.p_min[i]);
            self.p_max[i] = self.p_max[i].max(other.p_max[i]);
        }
        self
    }
}

/// Computes all gap quantities in one streaming pass over every deterministic
/// policy (memory `O(SH)` per worker beyond the result tables).
pub fn gap_report(mdp: &Mdp, budget: EnumerationBudget) -> Result<GapReport, OracleError> {
    let shape = mdp.shape();
    let (ns, horizon) = (mdp.num_states(), mdp.horizon());
    let space = PolicySpace::new(shape, budget, None)?;
    let opt = optimal_values(mdp);
    let vstar: Vec<f64> = (1..=horizon).flat_map(|h| opt.values.v_row(h).to_vec()).collect();
    let s1 = mdp.initial_state();
    let n = shape.num_triplets();

    let acc = space
        .par_fold(
            || (GapAccumulator::new(n), vec![0.0; (horizon + 1) * ns], vec![0.0; horizon * ns]),
            |(acc, values, probs), pi| {
                policy_values_into(mdp, pi, values);
                probs.fill(0.0);
                probs[s1] = 1.0;
                propagate_states(mdp, pi, 1, probs);
                let mut worst = 0.0f64;
                for i in 0..horizon * ns {
                    if probs[i] > 0.0 {
                        worst = worst.max(vstar[i] - values[i]);
                    }
                }
                let ret = values[s1];
                for h in 1..=horizon {
                    for s in 0..ns {
                        let i = (h - 1) * ns + s;
                        let p = probs[i];
                        if p > 0.0 {
                            let t = shape.triplet_index(h, s, pi.action(h, s));
                            acc.cond[t] = acc.cond[t].min(worst);
                            acc.best_return[t] = acc.best_return[t].max(ret);
                            acc.best_visit_value[t] = acc.best_visit_value[t].max(values[i]);
                            acc.p_min[t] = acc.p_min[t].min(p);
                            acc.p_max[t] = acc.p_max[t].max(p);
                        }
                    }
                }
            },
            |(a, v, p), (b, _, _)| (a.merge(b), v, p),
        )
        .0;

    let vstar1 = opt.values.v(1, s1);
    let mut entries = vec![None; n];
    for (h, s, a) in shape.available_triplets() {
        let t = shape.triplet_index(h, s, a);
        let reachable = acc.p_max[t] > 0.0;
        let value_gap = (opt.values.v(h, s) - opt.values.q(h, s, a)).max(0.0);
        let (return_gap, visiting_value_gap) = if reachable {
            ((vstar1 - acc.best_return[t]).max(0.0), (opt.values.v(h, s) - acc.best_visit_value[t]).max(0.0))
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        entries[t] = Some(TripletGaps {
            value_gap,
            return_gap,
            cond_return_gap: acc.cond[t],
            visiting_value_gap,
            p_min: acc.p_min[t],
            p_max: acc.p_max[t],
            reachable,
        });
    }
    Ok(GapReport {
        shape: shape.clone(),
        entries,
        optimal_value: vstar1,
        deterministic: mdp.is_deterministic(),
        policies_enumerated: space.len(),
    })
}

fn project(report: &GapReport, f: impl Fn(&TripletGaps) -> f64) -> TripletTable<f64> {
    let mut t = TripletTable::filled(report.shape(), f64::NAN);
    for ((h, s, a), g) in report.iter() {
        t.set(h, s, a, f(g));
    }
    t
}

/// `min_{pi: p_h^pi(s,a) > 0} max_{(l, s'): p_l^pi(s') > 0} (V*_l(s') - V^pi_l(s'))`.
pub fn conditional_return_gaps(mdp: &Mdp, budget: EnumerationBudget) -> Result<TripletTable<f64>, OracleError> {
    Ok(project(&gap_report(mdp, budget)?, |g| g.cond_return_gap))
}

/// `V*_1(s_1) - max_{pi: p_h^pi(s,a) > 0} V^pi_1(s_1)`.
pub fn return_gaps(mdp: &Mdp, budget: EnumerationBudget) -> Result<TripletTable<f64>, OracleError> {
    Ok(project(&gap_report(mdp, budget)?, |g| g.return_gap))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderingKind {
    /// `cond_return_gap < value_gap`
    BelowValueGap,
    /// `cond_return_gap < return_gap`
    BelowReturnGap,
    /// `cond_return_gap < visiting_value_gap` (first step of the chain)
    BelowVisitingGap,
    /// `visiting_value_gap != value_gap`
    ChainMismatch,
    /// deterministic transitions but `cond_return_gap != return_gap`
    DeterministicMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderingViolation {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub kind: OrderingKind,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapOrderingReport {
    pub deterministic: bool,
    pub triplets_checked: usize,
    pub violations: Vec<OrderingViolation>,
}

impl GapOrderingReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `cond >= value_gap`, `cond >= return_gap` and, for deterministic
/// transitions, `cond == return_gap`, all within [`ORDERING_TOLERANCE`].
pub fn check_gap_ordering(report: &GapReport) -> GapOrderingReport {
    let tol = ORDERING_TOLERANCE;
    let mut violations = Vec::new();
    let mut checked = 0;
    for ((h, s, a), g) in report.iter() {
        checked += 1;
        let mut flag = |kind, lhs: f64, rhs: f64| violations.push(OrderingViolation { h, s, a, kind, lhs, rhs });
        if !g.reachable {
            // +inf dominates everything
            continue;
        }
        if g.cond_return_gap < g.value_gap - tol {
            flag(OrderingKind::BelowValueGap, g.cond_return_gap, g.value_gap);
        }
        if g.cond_return_gap < g.return_gap - tol {
            flag(OrderingKind::BelowReturnGap, g.cond_return_gap, g.return_gap);
        }
        if g.cond_return_gap < g.visiting_value_gap - tol {
            flag(OrderingKind::BelowVisitingGap, g.cond_return_gap, g.visiting_value_gap);
        }
        if (g.visiting_value_gap - g.value_gap).abs() > tol {
            flag(OrderingKind::ChainMismatch, g.visiting_value_gap, g.value_gap);
        }
        if report.deterministic && (g.cond_return_gap - g.return_gap).abs() > tol {
            flag(OrderingKind::DeterministicMismatch, g.cond_return_gap, g.return_gap);
        }
    }
    GapOrderingReport { deterministic: report.deterministic, triplets_checked: checked, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_mdp, tree_mdp, TreeSpec};
    use crate::mdp::{evaluate_policy, visitation_probabilities, MdpBuilder, RewardModel};

    #[test]
    fn counts_match_mask_products() {
        let mut b = MdpBuilder::new(1, 2, 2);
        b.deterministic_transition(1, 0, 0, 0)
            .deterministic_transition(1, 0, 1, 0)
            .deterministic_transition(2, 0, 0, 0)
            .deterministic_transition(2, 0, 1, 0);
        let mdp = b.build().unwrap();
        let space = enumerate_policies(&mdp, EnumerationBudget::default(), None).unwrap();
        assert_eq!(space.iter().count(), 4);

        let mdp = random_mdp(3, 2, 3, 0, true).unwrap();
        let space = enumerate_policies(&mdp, EnumerationBudget::default(), None).unwrap();
        assert_eq!(space.len(), 512);
        let all: std::collections::HashSet<_> = space.iter().collect();
        assert_eq!(all.len(), 512);

        let tree = tree_mdp(&TreeSpec::new(8, 3, 4, 0.5)).unwrap();
        let space = enumerate_policies(&tree, EnumerationBudget::default(), None).unwrap();
        let product: u64 =
            (1..=4).flat_map(|h| (0..8).map(move |s| (h, s))).map(|(h, s)| tree.actions(h, s).len() as u64).product();
        assert_eq!(space.len(), product);
        assert!(space.len() < 3u64.pow(32));
    }

    #[test]
    fn restricted_enumeration_fixes_other_stages() {
        let mdp = random_mdp(2, 3, 3, 4, true).unwrap();
        let space = enumerate_policies(&mdp, EnumerationBudget::default(), Some(2..=2)).unwrap();
        assert_eq!(space.len(), 9);
        for pi in space.iter() {
            for s in 0..2 {
                assert_eq!(pi.action(1, s), 0);
                assert_eq!(pi.action(3, s), 0);
            }
        }
        assert_eq!(space.policy_at(5), space.iter().nth(5).unwrap());
    }

    #[test]
    fn budget_overflow_reports_required_count() {
        let mdp = random_mdp(3, 2, 3, 0, true).unwrap();
        let err = enumerate_policies(&mdp, EnumerationBudget { max_policies: 100 }, None).unwrap_err();
        assert!(matches!(err, OracleError::BudgetExceeded { required: 512, budget: 100 }));
    }

    #[test]
    fn tree_value_and_return_gaps() {
        let mdp = tree_mdp(&TreeSpec::new(8, 3, 4, 0.5).bernoulli()).unwrap();
        let vg = value_gaps(&mdp);
        assert_eq!(vg.get(4, 7, 1), 0.5);
        assert_eq!(vg.get(4, 7, 0), 0.0);
        let report = gap_report(&mdp, EnumerationBudget::default()).unwrap();
        assert_eq!(report.get(4, 7, 1).unwrap().return_gap, 0.5);
        for s in 3..7 {
            for a in 0..3 {
                let g = report.get(3, s, a).unwrap();
                assert!(g.reachable);
                assert_eq!(g.return_gap, 0.0);
                assert_eq!(g.p_min, 1.0);
            }
        }
        for ((h, s, _), g) in report.iter() {
            if g.reachable {
                assert_eq!(g.p_min, 1.0);
                assert_eq!(g.p_max, 1.0);
                if h < 4 {
                    assert_eq!(g.value_gap, 0.0, "stage {h} state {s}");
                }
            }
        }
        assert!(check_gap_ordering(&report).holds());
    }

    #[test]
    fn initial_stage_visitation() {
        let mdp = random_mdp(3, 2, 2, 3, true).unwrap();
        let ext = min_max_visitation(&mdp, EnumerationBudget::default()).unwrap();
        for a in 0..2 {
            assert_eq!(ext.p_min.get(1, 0, a), 1.0);
            assert_eq!(ext.p_max.get(1, 0, a), 1.0);
            for s in 1..3 {
                assert!(!ext.reachable.get(1, s, a));
                assert_eq!(ext.p_min.get(1, s, a), f64::INFINITY);
            }
        }
    }

    #[test]
    fn single_route_split_gives_p_min() {
        // state 0 --a0--> {1: 0.3, 2: 0.7}; a1 --> 2. State 1 only via a0.
        let mut b = MdpBuilder::new(3, 2, 2);
        b.transition(1, 0, 0, &[0.0, 0.3, 0.7]).deterministic_transition(1, 0, 1, 2);
        for s in 1..3 {
            b.deterministic_transition(1, s, 0, s).deterministic_transition(1, s, 1, s);
        }
        for s in 0..3 {
            b.deterministic_transition(2, s, 0, s).deterministic_transition(2, s, 1, s);
        }
        let mdp = b.build().unwrap();
        let ext = min_max_visitation(&mdp, EnumerationBudget::default()).unwrap();
        assert!((ext.p_min.get(2, 1, 0) - 0.3).abs() < 1e-15);
        assert!((ext.p_max.get(2, 1, 1) - 0.3).abs() < 1e-15);
        assert!((ext.p_min.get(2, 2, 0) - 0.7).abs() < 1e-15);
        assert_eq!(ext.p_max.get(2, 2, 0), 1.0);
        assert!(!ext.reachable.get(2, 0, 0));
    }

    #[test]
    fn prefix_enumeration_matches_full_enumeration() {
        for seed in 0..5 {
            let mdp = random_mdp(3, 2, 3, seed, seed % 2 == 0).unwrap();
            let ext = min_max_visitation(&mdp, EnumerationBudget::default()).unwrap();
            let report = gap_report(&mdp, EnumerationBudget::default()).unwrap();
            for ((h, s, a), g) in report.iter() {
                assert_eq!(ext.p_min.get(h, s, a), g.p_min);
                assert_eq!(ext.p_max.get(h, s, a), g.p_max);
                assert_eq!(ext.reachable.get(h, s, a), g.reachable);
            }
        }
    }

    #[test]
    fn gaps_match_brute_force_value_gap_definition() {
        let mdp = random_mdp(3, 2, 3, 0, true).unwrap();
        let vg = value_gaps(&mdp);
        let opt = optimal_values(&mdp);
        let space = enumerate_policies(&mdp, EnumerationBudget::default(), None).unwrap();
        for (h, s, a) in mdp.shape().available_triplets() {
            let best = space
                .iter()
                .filter(|pi| pi.action(h, s) == a)
                .map(|pi| evaluate_policy(&mdp, &pi).unwrap().q(h, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((opt.values.v(h, s) - best - vg.get(h, s, a)).abs() < 1e-12);
        }
        for h in 1..=3 {
            for s in 0..3 {
                let a = opt.policy.action(h, s);
                assert_eq!(vg.get(h, s, a), 0.0);
            }
        }
    }

    #[test]
    fn optimal_everywhere_policy_has_zero_conditional_gap_at_root() {
        let mdp = random_mdp(3, 2, 3, 11, true).unwrap();
        let report = gap_report(&mdp, EnumerationBudget::default()).unwrap();
        let opt = optimal_values(&mdp);
        let a = opt.policy.action(1, 0);
        assert_eq!(report.get(1, 0, a).unwrap().cond_return_gap, 0.0);
        let vt = visitation_probabilities(&mdp, &opt.policy, None).unwrap();
        for (h, s, a) in mdp.shape().available_triplets() {
            if vt.pair(h, s, a) > 0.0 {
                assert_eq!(report.get(h, s, a).unwrap().return_gap, 0.0);
            }
        }
    }

    #[test]
    fn single_action_mdp_has_zero_gaps() {
        let mut b = MdpBuilder::new(2, 1, 3);
        for h in 1..=3 {
            for s in 0..2 {
                b.transition(h, s, 0, &[0.4, 0.6]).reward(h, s, 0, RewardModel::Bernoulli { mean: 0.2 });
            }
        }
        let mdp = b.build().unwrap();
        let report = gap_report(&mdp, EnumerationBudget::default()).unwrap();
        assert_eq!(report.num_reachable(), 5);
        for (_, g) in report.iter().filter(|(_, g)| g.reachable) {
            assert_eq!(g.value_gap, 0.0);
            assert_eq!(g.return_gap, 0.0);
            assert_eq!(g.cond_return_gap, 0.0);
        }
    }

    #[test]
    fn deterministic_instances_have_equal_conditional_and_return_gaps() {
        let mdp = random_mdp(3, 2, 3, 1, false).unwrap();
        let report = gap_report(&mdp, EnumerationBudget::default()).unwrap();
        for (_, g) in report.iter() {
            if g.reachable {
                assert!((g.cond_return_gap - g.return_gap).abs() <= 1e-9);
            } else {
                assert_eq!(g.cond_return_gap, f64::INFINITY);
                assert_eq!(g.return_gap, f64::INFINITY);
            }
        }
    }

    #[test]
    fn parallel_result_independent_of_pool_size() {
        let mdp = random_mdp(3, 3, 3, 21, true).unwrap();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| gap_report(&mdp, EnumerationBudget::default()).unwrap());
        let wide = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| gap_report(&mdp, EnumerationBudget::default()).unwrap());
        assert_eq!(serial, wide);
    }

    #[test]
    fn csv_marks_unreachable_with_inf() {
        let mdp = random_mdp(2, 2, 2, 0, false).unwrap();
        let report = gap_report(&mdp, EnumerationBudget::default()).unwrap();
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("h,s,a,value_gap,return_gap,cond_return_gap,p_min,p_max,unreachable"));
        assert!(text.contains("inf,inf,inf,0,true"));
    }
}
