//! Pinned instances, run campaigns and the acceptance criteria. Shared by the
//! `verify` subcommand and the acceptance test target.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use super::config::{cell_rng, derive_u64, InstanceSource};
use super::HarnessError;
use crate::bounds::{
    beta_upper, chain_bound, implicit_fixed_point, pac_lower_bound, solve_log_inequality, targeting_bound,
    theorem1_explicit_bound, theorem1_implicit_check, theorem2_t_eps_bound,
};
use crate::bpi::{run, threshold_beta, BpiConfig, RunResult, Thresholds};
use crate::instances::random_mdp;
use crate::mdp::{
    evaluate_policy, optimal_values, sample_episode_into, visitation_probabilities, DeterministicPolicy, Mdp,
    Trajectory,
};
use crate::oracles::{check_gap_ordering, gap_report, EnumerationBudget, GapReport};
use crate::ucbvi::measure_t_epsilon_with_seeds;

pub const PINNED_MASTER_SEED: u64 = 0;
pub const PAC_EPSILON: f64 = 0.2;
pub const PAC_DELTA: f64 = 0.1;
pub const PAC_RUNS: usize = 100;
pub const GOOD_EVENT_RUNS: usize = 500;
pub const TARGETING_RUNS: usize = 50;
pub const GAP_INSTANCES: usize = 200;
pub const REGRET_SEEDS: usize = 50;
pub const MC_EPISODES: usize = 1_000_000;
pub const NAIVE_INSTANCES: usize = 20;
const MAX_FAILURES: usize = 20;

/// The three BPI-UCRL instances of the PAC campaigns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PinnedInstance {
    Deterministic,
    Stochastic,
    Tree,
}

impl PinnedInstance {
    pub const ALL: [PinnedInstance; 3] =
        [PinnedInstance::Deterministic, PinnedInstance::Stochastic, PinnedInstance::Tree];

    pub fn source(self) -> InstanceSource {
        match self {
            PinnedInstance::Deterministic => {
                InstanceSource::Random { num_states: 3, num_actions: 2, horizon: 3, seed: 1, deterministic: true }
            }
            PinnedInstance::Stochastic => {
                InstanceSource::Random { num_states: 3, num_actions: 2, horizon: 3, seed: 0, deterministic: false }
            }
            PinnedInstance::Tree => {
                InstanceSource::Tree { num_states: 8, num_actions: 3, horizon: 4, gap: 0.5, bernoulli: true }
            }
        }
    }

    pub fn label(self) -> String {
        self.source().label()
    }
}

/// The unit-variance Gaussian tree used for the regret criterion.
pub fn regret_tree_source() -> InstanceSource {
    InstanceSource::Tree { num_states: 8, num_actions: 3, horizon: 4, gap: 0.2, bernoulli: false }
}

/// Where and why an invariant failed.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub module: &'static str,
    pub invariant: &'static str,
    pub instance: String,
    pub seed: Option<u64>,
    pub detail: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "module={} invariant={} instance={}", self.module, self.invariant, self.instance)?;
        if let Some(s) = self.seed {
            write!(f, " seed={s}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionOutcome {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub summary: String,
    /// At most a handful are kept; `failure_count` has the total.
    pub failures: Vec<Failure>,
    pub failure_count: usize,
    pub notes: Vec<String>,
}

impl CriterionOutcome {
    fn new(id: &'static str, title: &'static str) -> Self {
        CriterionOutcome {
            id,
            title,
            passed: true,
            summary: String::new(),
            failures: Vec::new(),
            failure_count: 0,
            notes: Vec::new(),
        }
    }

    fn fail(&mut self, f: Failure) {
        self.passed = false;
        self.failure_count += 1;
        if self.failures.len() < MAX_FAILURES {
            self.failures.push(f);
        }
    }

    /// Conjunction of two outcomes under a new id.
    pub fn merge(id: &'static str, title: &'static str, parts: Vec<CriterionOutcome>) -> Self {
        let mut out = CriterionOutcome::new(id, title);
        let mut summaries = Vec::new();
        for p in parts {
            out.passed &= p.passed;
            out.failure_count += p.failure_count;
            out.failures.extend(p.failures);
            out.notes.extend(p.notes);
            summaries.push(p.summary);
        }
        out.failures.truncate(MAX_FAILURES);
        out.summary = summaries.join("; ");
        out
    }

    /// `[PASS] C1 title: summary`.
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] {} {}: {}", self.id, self.title, self.summary)
    }
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.line())?;
        for n in &self.notes {
            writeln!(f, "    note: {n}")?;
        }
        for x in &self.failures {
            writeln!(f, "    failure: {x}")?;
        }
        if self.failure_count > self.failures.len() {
            writeln!(f, "    ... {} more failures", self.failure_count - self.failures.len())?;
        }
        Ok(())
    }
}

/// One BPI-UCRL run of a campaign; `index` is the cell seed.
#[derive(Clone, Debug)]
pub struct CampaignRun {
    pub index: u64,
    pub result: Result<RunResult, String>,
}

/// BPI-UCRL runs on one pinned instance at `(PAC_EPSILON, PAC_DELTA)`.
#[derive(Clone, Debug)]
pub struct Campaign {
    pub instance: PinnedInstance,
    pub label: String,
    pub mdp: Mdp,
    pub gaps: GapReport,
    pub diagnostics: bool,
    pub master_seed: u64,
    pub runs: Vec<CampaignRun>,
}

impl Campaign {
    pub fn new(instance: PinnedInstance, diagnostics: bool, master_seed: u64) -> Result<Self, HarnessError> {
        let mdp = instance.source().build()?;
        let gaps = gap_report(&mdp, EnumerationBudget::default())?;
        Ok(Campaign { instance, label: instance.label(), mdp, gaps, diagnostics, master_seed, runs: Vec::new() })
    }

    /// Runs cells `len..len+count` in parallel.
    pub fn extend(&mut self, count: usize) {
        let start = self.runs.len() as u64;
        let config = BpiConfig { diagnostics: self.diagnostics, ..BpiConfig::default() };
        let new: Vec<CampaignRun> = (start..start + count as u64)
            .into_par_iter()
            .map(|index| {
                let mut rng = cell_rng(self.master_seed, &self.label, index);
                let result = run(&self.mdp, PAC_EPSILON, PAC_DELTA, &config, &mut rng).map_err(|e| e.to_string());
                CampaignRun { index, result }
            })
            .collect();
        self.runs.extend(new);
    }

    pub fn with_runs(
        instance: PinnedInstance,
        count: usize,
        diagnostics: bool,
        master_seed: u64,
    ) -> Result<Self, HarnessError> {
        let mut c = Campaign::new(instance, diagnostics, master_seed)?;
        c.extend(count);
        Ok(c)
    }

    /// Extends in batches until `want` runs held the good event (or `limit` runs exist).
    pub fn extend_until_good(&mut self, want: usize, limit: usize) {
        while self.good_event_runs().count() < want && self.runs.len() < limit {
            let missing = want - self.good_event_runs().count();
            self.extend((missing + missing / 4 + 1).min(limit - self.runs.len()));
        }
    }

    /// Successful runs whose good event held, in index order.
    pub fn good_event_runs(&self) -> impl Iterator<Item = (u64, &RunResult)> {
        self.runs.iter().filter_map(|r| match &r.result {
            Ok(res) if res.diagnostics.is_some() && res.good_event_holds() => Some((r.index, res)),
            _ => None,
        })
    }

    fn failure(&self, module: &'static str, invariant: &'static str, seed: u64, detail: String) -> Failure {
        Failure { module, invariant, instance: self.label.clone(), seed: Some(seed), detail }
    }
}

/// C1: recommended-policy success rate per instance.
pub fn pac_correctness(campaigns: &[&Campaign], runs: usize) -> CriterionOutcome {
    let mut out = CriterionOutcome::new("C1", "PAC correctness");
    let target = 1.0 - PAC_DELTA - 0.05;
    let mut parts = Vec::new();
    for c in campaigns {
        let cells = &c.runs[..runs.min(c.runs.len())];
        let mut ok = 0usize;
        let mut taus = Vec::new();
        for r in cells {
            match &r.result {
                Ok(res) => {
                    if res.stopped && res.success {
                        ok += 1;
                    }
                    taus.push(res.tau as f64);
                }
                Err(e) => out.fail(c.failure("bpi_ucrl", "run completes", r.index, e.clone())),
            }
        }
        let rate = ok as f64 / cells.len().max(1) as f64;
        if cells.len() < runs || rate < target {
            out.fail(c.failure(
                "bpi_ucrl",
                "success rate >= 1 - delta - 0.05",
                0,
                format!("{ok}/{} successes (rate {rate:.3} < {target:.2})", cells.len()),
            ));
        }
        taus.sort_by(f64::total_cmp);
        let median = taus.get(taus.len() / 2).copied().unwrap_or(f64::NAN);
        parts.push(format!("{} {ok}/{} (median tau {median:.0})", c.instance.short_name(), cells.len()));
    }
    out.summary = format!("success per instance: {} (need >= {target:.2})", parts.join(", "));
    out
}

impl PinnedInstance {
    fn short_name(self) -> &'static str {
        match self {
            PinnedInstance::Deterministic => "det",
            PinnedInstance::Stochastic => "sto",
            PinnedInstance::Tree => "tree",
        }
    }
}

/// Instance `i` of the gap-ordering family: `S <= 4`, `A <= 3`, `H <= 3`.
pub fn gap_family_instance(i: usize, deterministic: bool, master_seed: u64) -> Result<Mdp, HarnessError> {
    let (s, a, h) = (1 + i % 4, 1 + (i / 4) % 3, 1 + (i / 12) % 3);
    let tag = if deterministic { "gap-family-det" } else { "gap-family-sto" };
    Ok(random_mdp(s, a, h, derive_u64(master_seed, tag, i as u64), !deterministic)?)
}

/// C2: gap ordering on random stochastic and deterministic instances.
pub fn gap_ordering(master_seed: u64, count: usize) -> CriterionOutcome {
    let mut out = CriterionOutcome::new("C2", "gap ordering");
    let mut checked = 0usize;
    for deterministic in [false, true] {
        type Checked = Result<(usize, Vec<String>), String>;
        let results: Vec<(usize, Checked)> = (0..count)
            .into_par_iter()
            .map(|i| {
                let res = gap_family_instance(i, deterministic, master_seed)
                    .and_then(|mdp| Ok(gap_report(&mdp, EnumerationBudget::default())?))
                    .map(|g| {
                        let rep = check_gap_ordering(&g);
                        let v = rep
                            .violations
                            .iter()
                            .map(|v| format!("({},{},{}) {:?}: {} vs {}", v.h, v.s, v.a, v.kind, v.lhs, v.rhs))
                            .collect();
                        (rep.triplets_checked, v)
                    })
                    .map_err(|e| e.to_string());
                (i, res)
            })
            .collect();
        let kind = if deterministic { "det" } else { "sto" };
        for (i, res) in results {
            let instance = format!("gap-family-{kind}#{i}");
            match res {
                Ok((n, violations)) => {
                    checked += n;
                    for v in violations {
                        out.fail(Failure {
                            module: "exact_oracles",
                            invariant: "cond gap >= value gap, return gap; equality when deterministic",
                            instance: instance.clone(),
                            seed: None,
                            detail: v,
                        });
                    }
                }
                Err(e) => out.fail(Failure {
                    module: "exact_oracles",
                    invariant: "oracle computable",
                    instance,
                    seed: None,
                    detail: e,
                }),
            }
        }
    }
    out.summary = format!(
        "{count} stochastic + {count} deterministic instances, {checked} triplets, {} violations",
        out.failure_count
    );
    out
}

/// C3: `tau` below the explicit bound and the implicit inequality on every stopped run.
pub fn bound_dominance(campaigns: &[&Campaign], runs: usize) -> CriterionOutcome {
    let mut out = CriterionOutcome::new("C3", "bound dominance");
    let mut completed = 0usize;
    let mut slack = Vec::new();
    for c in campaigns {
        let bound = match theorem1_explicit_bound(&c.gaps, PAC_DELTA, PAC_EPSILON) {
            Ok(b) => b.value,
            Err(e) => {
                out.fail(c.failure("bounds_calc", "explicit bound defined", 0, e.to_string()));
                continue;
            }
        };
        let mut min_ratio = f64::INFINITY;
        for r in &c.runs[..runs.min(c.runs.len())] {
            let Ok(res) = &r.result else { continue };
            if !res.stopped {
                continue;
            }
            completed += 1;
            min_ratio = min_ratio.min(bound / res.tau as f64);
            if res.tau as f64 > bound {
                out.fail(c.failure(
                    "bounds_calc",
                    "tau <= explicit bound",
                    r.index,
                    format!("tau {} > {bound}", res.tau),
                ));
            }
            match theorem1_implicit_check(res.tau, &c.gaps, PAC_DELTA, PAC_EPSILON) {
                Ok(true) => {}
                Ok(false) => out.fail(c.failure(
                    "bounds_calc",
                    "implicit inequality at tau",
                    r.index,
                    format!("tau {}", res.tau),
                )),
                Err(e) => out.fail(c.failure("bounds_calc", "implicit inequality at tau", r.index, e.to_string())),
            }
        }
        slack.push(format!("{} bound {bound:.3e} >= {min_ratio:.0}x tau", c.instance.short_name()));
    }
    out.summary = format!("{completed} completed runs, {} violations; {}", out.failure_count, slack.join(", "));
    out
}

/// C4: `tau <= sum Z + 1` and the per-triplet targeting bound on the first
/// `runs` good-event runs.
pub fn targeting(campaign: &Campaign, runs: usize) -> CriterionOutcome {
    let mut out = CriterionOutcome::new("C4", "targeting");
    let shape = campaign.mdp.shape();
    let th = Thresholds::new(shape.num_states(), shape.num_actions(), shape.horizon(), PAC_DELTA)
        .expect("pinned delta is valid");
    let mut used = 0usize;
    let mut tightest = 0.0f64;
    for (seed, res) in campaign.good_event_runs().take(runs) {
        used += 1;
        let d = res.diagnostics.as_ref().expect("good-event runs carry diagnostics");
        let total: u64 = d.targets.iter().sum();
        if res.tau > total + 1 {
            out.fail(campaign.failure(
                "bpi_ucrl",
                "tau <= sum Z + 1",
                seed,
                format!("tau {} > {}", res.tau, total + 1),
            ));
        }
        for (h, s, a) in shape.available_triplets() {
            let i = shape.triplet_index(h, s, a);
            let z = d.targets[i];
            let g = campaign.gaps.get(h, s, a).expect("available triplet");
            if !g.reachable {
                if z != 0 {
                    out.fail(campaign.failure(
                        "bpi_ucrl",
                        "unreachable triplets never targeted",
                        seed,
                        format!("({h},{s},{a}) Z={z}"),
                    ));
                }
                continue;
            }
            let bound = targeting_bound(res.tau - 1, g.p_min, g.cond_return_gap, PAC_EPSILON, &th, shape.horizon());
            tightest = tightest.max(z as f64 / bound);
            if z as f64 > bound {
                out.fail(campaign.failure(
                    "bpi_ucrl",
                    "Z <= 144 H^4 beta(tau-1) / (p_min max(gap, eps)^2)",
                    seed,
                    format!("({h},{s},{a}) Z={z} > {bound}"),
                ));
            }
        }
    }
    if used < runs {
        out.fail(Failure {
            module: "harness_cli",
            invariant: "enough good-event runs",
            instance: campaign.label.clone(),
            seed: None,
            detail: format!("only {used} of {runs} good-event runs available"),
        });
    }
    out.summary = format!(
        "{used} good-event runs on {}, {} violations, max Z/bound {tightest:.2e}",
        campaign.instance.short_name(),
        out.failure_count
    );
    out
}

/// C5: fraction of runs with any good-event violation.
pub fn good_event_frequency(campaign: &Campaign, runs: usize) -> CriterionOutcome {
    let mut out = CriterionOutcome::new("C5", "good-event frequency");
    let cells = &campaign.runs[..runs.min(campaign.runs.len())];
    let mut bad = 0usize;
    let mut kinds = [0u64; 3];
    for r in cells {
        match &r.result {
            Ok(res) => match &res.diagnostics {
                Some(d) if !d.good_event.holds() => {
                    bad += 1;
                    kinds[0] += u64::from(d.good_event.reward_violations > 0);
                    kinds[1] += u64::from(d.good_event.transition_violations > 0);
                    kinds[2] += u64::from(d.good_event.count_violations > 0);
                }
                Some(_) => {}
                None => out.fail(campaign.failure("bpi_ucrl", "diagnostics enabled", r.index, "no diagnostics".into())),
            },
            Err(e) => out.fail(campaign.failure("bpi_ucrl", "run completes", r.index, e.clone())),
        }
    }
    let limit = PAC_DELTA + 0.05;
    let frac = bad as f64 / cells.len().max(1) as f64;
    if cells.len() < runs || frac > limit {
        out.fail(Failure {
            module: "bpi_ucrl",
            invariant: "violation fraction <= delta + 0.05",
            instance: campaign.label.clone(),
            seed: None,
            detail: format!("{bad}/{} runs violated", cells.len()),
        });
    }
    out.summary = format!(
        "{bad}/{} runs with a violation (fraction {frac:.3}, limit {limit:.2}; reward {}, transition {}, count {})",
        cells.len(),
        kinds[0],
        kinds[1],
        kinds[2]
    );
    out
}

/// `t` values: `per_decade`-ish log-spaced points in `[1, 10^6]`, both ends included.
fn log_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| 10f64.powf(6.0 * k as f64 / (points - 1) as f64)).collect()
}

/// C6, grid part: `beta_upper` over 10^4 points and `solve_log_inequality` over 100x100.
pub fn lemma_grids() -> CriterionOutcome {
    let mut out = CriterionOutcome::new("C6a", "lemma grids");
    let ts = log_grid(667);
    let deltas = [0.1, 0.01, 0.5, 1e-4];
    let mut points = 0usize;
    let mut min_margin = f64::INFINITY;
    for s in 2..=16usize {
        for (k, &t) in ts.iter().enumerate() {
            let (a, h, delta) = (1 + k % 4, 1 + k % 5, deltas[k % deltas.len()]);
            let beta = threshold_beta(t - 1.0, delta, s, a, h).expect("grid delta is valid");
            let upper = beta_upper(t, s, a, h, delta);
            points += 1;
            min_margin = min_margin.min(upper - beta);
            if !(beta <= upper) {
                out.fail(Failure {
                    module: "bounds_calc",
                    invariant: "beta(t-1) <= beta_upper(t)",
                    instance: format!("S={s} A={a} H={h} delta={delta} t={t}"),
                    seed: None,
                    detail: format!("{beta} > {upper}"),
                });
            }
        }
    }
    let mut pairs = 0usize;
    for b in 1..=100u32 {
        for c in 1..=100u32 {
            let (b, c) = (b as f64, c as f64);
            let fixed = largest_fixed_point(b, c);
            let bound = solve_log_inequality(b, c).expect("B, C >= 1");
            pairs += 1;
            if fixed > bound {
                out.fail(Failure {
                    module: "bounds_calc",
                    invariant: "fixed point of k = B ln k + C <= solver",
                    instance: format!("B={b} C={c}"),
                    seed: None,
                    detail: format!("{fixed} > {bound}"),
                });
            }
        }
    }
    out.summary = format!(
        "beta_upper on {points} points (min margin {min_margin:.3}), log solver on {pairs} pairs, {} violations",
        out.failure_count
    );
    out
}

/// Largest solution of `k = B ln k + C`: the map is increasing and concave, so
/// iterating from far above decreases monotonically onto it. When the cap is hit
/// (tangent cases such as `B = C = 1`) the result is still an upper estimate.
pub fn largest_fixed_point(b: f64, c: f64) -> f64 {
    let mut k = 1e12;
    for _ in 0..10_000 {
        let next = b * f64::ln(k) + c;
        if (k - next).abs() <= 1e-12 * k {
            return next;
        }
        k = next;
    }
    k
}

/// C6, run part: per-episode lemma checks on every good-event run.
pub fn lemma_runs(campaign: &Campaign) -> CriterionOutcome {
    let mut out = CriterionOutcome::new("C6b", "lemma checks on runs");
    let mut runs = 0usize;
    let mut episodes = 0u64;
    for (seed, res) in campaign.good_event_runs() {
        runs += 1;
        let lemmas = &res.diagnostics.as_ref().expect("diagnostics").lemmas;
        episodes += lemmas.episodes_checked;
        for v in &lemmas.records {
            out.fail(campaign.failure(
                "bpi_ucrl",
                "per-episode lemma",
                seed,
                format!("{:?} at episode {} (h={}, s={}): {} > {}", v.kind, v.episode, v.h, v.s, v.lhs, v.rhs),
            ));
        }
        if lemmas.violations as usize > lemmas.records.len() {
            out.failure_count += lemmas.violations as usize - lemmas.records.len();
        }
    }
    out.summary = format!("{runs} good-event runs, {episodes} episodes checked, {} violations", out.failure_count);
    out
}

/// C6: both parts.
pub fn lemma_checks(campaign: &Campaign) -> CriterionOutcome {
    CriterionOutcome::merge("C6", "lemma-level checks", vec![lemma_grids(), lemma_runs(campaign)])
}

/// C7: measured `T_eps` on the Gaussian tree against the closed-form bound, and
/// the PAC lower bound against `T_eps` at `delta = 0.001`.
pub fn regret_separation(master_seed: u64, num_seeds: usize) -> Result<CriterionOutcome, HarnessError> {
    let mut out = CriterionOutcome::new("C7", "regret vs identification");
    let src = regret_tree_source();
    let label = src.label();
    let mdp = src.build()?;
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let (eps, delta, small_delta) = (0.2, 0.1, 0.001);
    let bound = theorem2_t_eps_bound(ns, na, horizon, eps, delta)?;
    let t_max = (2.0 * bound).ceil() as u64;
    let seeds: Vec<u64> = (0..num_seeds as u64).map(|k| derive_u64(master_seed, &label, k)).collect();
    let est = measure_t_epsilon_with_seeds(&mdp, eps, delta, t_max, &seeds);
    let fail = |detail: String, invariant: &'static str| Failure {
        module: "ucbvi_regret",
        invariant,
        instance: label.clone(),
        seed: None,
        detail,
    };
    let measured = est.t_epsilon;
    match measured {
        Some(t) if t as f64 <= bound => {}
        Some(t) => out.fail(fail(format!("T_eps {t} > {bound}"), "T_eps <= closed-form bound")),
        None => out.fail(fail(format!("not reached by t_max {t_max}"), "T_eps <= closed-form bound")),
    }
    let lower = pac_lower_bound(ns, na, eps, small_delta)?;
    let measured_small = est.first_crossing(eps * small_delta);
    match measured_small {
        Some(t) if lower >= 2.0 * t as f64 => {}
        Some(t) => out.fail(fail(format!("lower bound {lower} < 2 x {t}"), "lower bound >= 2 T_eps at delta=0.001")),
        None => out.fail(fail(format!("not reached by t_max {t_max}"), "lower bound >= 2 T_eps at delta=0.001")),
    }
    let show = |t: Option<u64>| t.map_or_else(|| format!("not reached by {t_max}"), |t| t.to_string());
    out.summary = format!(
        "{num_seeds} seeds, t_max {t_max}: T_eps {} <= bound {bound:.0}; at delta=0.001 T_eps {} vs lower bound {lower:.1}",
        show(measured),
        show(measured_small),
    );
    let last = *est.mean_average_regret.last().expect("t_max >= 1");
    out.notes.push(format!(
        "first crossing is the definition used; the curve stays below eps*delta from T = {} (delta=0.1) and {} (delta=0.001); mean average regret at t_max = {last:.3e}",
        show(est.sustained_crossing(eps * delta)),
        show(est.sustained_crossing(eps * small_delta)),
    ));
    Ok(out)
}

/// Independent brute force for the conditional return gaps: loops over every
/// policy with its own odometer and evaluates each with the public DP routines.
/// Entry per triplet index; `None` for masked actions, `+inf` when unreachable.
pub fn naive_conditional_return_gaps(mdp: &Mdp) -> Result<Vec<Option<f64>>, HarnessError> {
    let shape = mdp.shape();
    let (ns, horizon) = (mdp.num_states(), mdp.horizon());
    let vstar = optimal_values(mdp).values;
    let mut out = vec![None; shape.num_triplets()];
    for (h, s, a) in shape.available_triplets() {
        out[shape.triplet_index(h, s, a)] = Some(f64::INFINITY);
    }
    let cells: Vec<(usize, usize)> = (1..=horizon).flat_map(|h| (0..ns).map(move |s| (h, s))).collect();
    let mut digits = vec![0usize; cells.len()];
    loop {
        let table: Vec<usize> = cells.iter().zip(&digits).map(|(&(h, s), &d)| shape.actions(h, s)[d]).collect();
        let pi = DeterministicPolicy::from_table(ns, horizon, table)?;
        let v = evaluate_policy(mdp, &pi)?;
        let visit = visitation_probabilities(mdp, &pi, None)?;
        let mut worst = f64::NEG_INFINITY;
        for &(l, s2) in &cells {
            if visit.state(l, s2) > 0.0 {
                worst = worst.max(vstar.v(l, s2) - v.v(l, s2));
            }
        }
        for &(h, s) in &cells {
            if visit.state(h, s) > 0.0 {
                let slot = out[shape.triplet_index(h, s, pi.action(h, s))].as_mut().expect("available");
                *slot = slot.min(worst);
            }
        }
        // odometer step
        let mut k = 0;
        loop {
            if k == cells.len() {
                return Ok(out);
            }
            let (h, s) = cells[k];
            digits[k] += 1;
            if digits[k] < shape.actions(h, s).len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// Instance `i` of the naive-enumerator family.
pub fn naive_family_instance(i: usize, master_seed: u64) -> Result<Mdp, HarnessError> {
    let (s, a, h) = (2 + i % 2, 2, 2 + (i / 2) % 2);
    Ok(random_mdp(s, a, h, derive_u64(master_seed, "naive-family", i as u64), i % 4 != 3)?)
}

/// Monte Carlo estimates of `V^pi_1(s_1)` and of every state-visitation
/// probability, compared with the DP values at three standard errors.
fn monte_carlo_check<R: Rng>(
    mdp: &Mdp,
    pi: &DeterministicPolicy,
    name: &str,
    episodes: usize,
    rng: &mut R,
    out: &mut CriterionOutcome,
) -> usize {
    let (ns, horizon) = (mdp.num_states(), mdp.horizon());
    let value = evaluate_policy(mdp, pi).expect("valid policy").v(1, mdp.initial_state());
    let visit = visitation_probabilities(mdp, pi, None).expect("valid policy");
    let mut counts = vec![0u64; horizon * ns];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut traj = Trajectory { steps: Vec::with_capacity(horizon) };
    for _ in 0..episodes {
        sample_episode_into(mdp, pi, rng, &mut traj);
        let g = traj.total_reward();
        sum += g;
        sum_sq += g * g;
        for (k, step) in traj.steps.iter().enumerate() {
            counts[k * ns + step.state] += 1;
        }
    }
    let n = episodes as f64;
    let mean = sum / n;
    let se = ((sum_sq / n - mean * mean).max(0.0) / n).sqrt();
    let mut checks = 1;
    let instance = format!("{} policy={name}", PinnedInstance::Stochastic.label());
    if (mean - value).abs() > 3.0 * se {
        out.fail(Failure {
            module: "mdp_core",
            invariant: "Monte Carlo return within 3 sigma of V^pi",
            instance: instance.clone(),
            seed: None,
            detail: format!("mean {mean} vs {value} (se {se})"),
        });
    }
    for h in 1..=horizon {
        for s in 0..ns {
            checks += 1;
            let p = visit.state(h, s);
            let freq = counts[(h - 1) * ns + s] as f64 / n;
            let sigma = (p * (1.0 - p) / n).sqrt();
            let ok = if p == 0.0 { freq == 0.0 } else { (freq - p).abs() <= 3.0 * sigma };
            if !ok {
                out.fail(Failure {
                    module: "mdp_core",
                    invariant: "Monte Carlo visitation within 3 sigma",
                    instance: instance.clone(),
                    seed: None,
                    detail: format!("(h={h}, s={s}) frequency {freq} vs {p} (sigma {sigma})"),
                });
            }
        }
    }
    checks
}

/// C8: DP against Monte Carlo, and the conditional return gaps against the naive enumerator.
pub fn oracle_cross_validation(
    master_seed: u64,
    episodes: usize,
    instances: usize,
) -> Result<CriterionOutcome, HarnessError> {
    let mut out = CriterionOutcome::new("C8", "oracle cross-validation");
    let src = PinnedInstance::Stochastic.source();
    let mdp = src.build()?;
    let policies = [
        ("optimal", optimal_values(&mdp).policy),
        ("first-available", DeterministicPolicy::first_available(mdp.shape())),
    ];
    let label = format!("{}/monte-carlo", src.label());
    let mut mc_checks = 0;
    for (k, (name, pi)) in policies.iter().enumerate() {
        let mut rng = cell_rng(master_seed, &label, k as u64);
        mc_checks += monte_carlo_check(&mdp, pi, name, episodes, &mut rng, &mut out);
    }
    let mut compared = 0usize;
    for i in 0..instances {
        let instance = format!("naive-family#{i}");
        let m = naive_family_instance(i, master_seed)?;
        let fast = gap_report(&m, EnumerationBudget::default())?;
        let slow = naive_conditional_return_gaps(&m)?;
        for ((h, s, a), g) in fast.iter() {
            compared += 1;
            let naive = slow[m.shape().triplet_index(h, s, a)].expect("available");
            if naive != g.cond_return_gap {
                out.fail(Failure {
                    module: "exact_oracles",
                    invariant: "conditional return gap equals naive enumeration",
                    instance: instance.clone(),
                    seed: None,
                    detail: format!("({h},{s},{a}) {} vs naive {naive}", g.cond_return_gap),
                });
            }
        }
    }
    out.summary = format!(
        "{mc_checks} Monte Carlo checks at {episodes} episodes, {compared} triplets on {instances} instances compared exactly, {} mismatches",
        out.failure_count
    );
    Ok(out)
}

/// Consistency of the bound evaluators on the pinned instances: the fixed point
/// of the implicit inequality and the simplified chain stay below the explicit
/// bound, and `tau = 1` satisfies the implicit inequality.
pub fn bound_consistency() -> Result<CriterionOutcome, HarnessError> {
    let mut out = CriterionOutcome::new("B", "bound consistency");
    let mut parts = Vec::new();
    for inst in PinnedInstance::ALL {
        let mdp = inst.source().build()?;
        let g = gap_report(&mdp, EnumerationBudget::default())?;
        let explicit = theorem1_explicit_bound(&g, PAC_DELTA, PAC_EPSILON)?.value;
        let chain = chain_bound(&g, PAC_DELTA, PAC_EPSILON)?;
        let fixed = implicit_fixed_point(&g, PAC_DELTA, PAC_EPSILON)?;
        let at_one = theorem1_implicit_check(1, &g, PAC_DELTA, PAC_EPSILON)?;
        let fail = |invariant, detail| Failure {
            module: "bounds_calc",
            invariant,
            instance: inst.label(),
            seed: None,
            detail,
        };
        if !(fixed <= chain && chain <= explicit) {
            out.fail(fail("fixed point <= chain <= explicit", format!("{fixed} / {chain} / {explicit}")));
        }
        if !at_one {
            out.fail(fail("implicit inequality at tau = 1", String::new()));
        }
        parts.push(format!("{} {fixed:.2e} <= {chain:.2e} <= {explicit:.2e}", inst.short_name()));
    }
    out.summary = parts.join(", ");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::conditional_return_gaps;

    #[test]
    fn naive_enumerator_matches_on_a_small_instance() {
        let mdp = random_mdp(3, 2, 2, 2, true).unwrap();
        let fast = conditional_return_gaps(&mdp, EnumerationBudget::default()).unwrap();
        let slow = naive_conditional_return_gaps(&mdp).unwrap();
        for (h, s, a, v) in fast.iter_available() {
            assert_eq!(slow[mdp.shape().triplet_index(h, s, a)], Some(v));
        }
    }

    #[test]
    fn fixed_point_iteration_solves_the_equation() {
        for (b, c) in [(3.0, 7.0), (100.0, 1.0), (2.0, 50.0)] {
            let k = largest_fixed_point(b, c);
            assert!((k - (b * k.ln() + c)).abs() < 1e-9 * k);
            assert!(k <= solve_log_inequality(b, c).unwrap());
        }
        let k = largest_fixed_point(1.0, 1.0);
        assert!((1.0..1.01).contains(&k));
    }

    #[test]
    fn small_campaign_runs_every_criterion_path() {
        let mut c = Campaign::new(PinnedInstance::Deterministic, true, 3).unwrap();
        c.extend_until_good(3, 10);
        assert!(c.good_event_runs().count() >= 3);
        assert!(targeting(&c, 3).passed);
        assert!(lemma_runs(&c).passed);
        assert!(bound_dominance(&[&c], 3).passed);
        let out = good_event_frequency(&c, c.runs.len());
        assert!(out.line().contains("C5"));
    }

    #[test]
    fn outcome_reports_failures() {
        let mut o = CriterionOutcome::new("X", "demo");
        for k in 0..30 {
            o.fail(Failure { module: "m", invariant: "i", instance: "x".into(), seed: Some(k), detail: "d".into() });
        }
        assert!(!o.passed);
        assert_eq!(o.failures.len(), MAX_FAILURES);
        assert_eq!(o.failure_count, 30);
        let text = o.to_string();
        assert!(text.starts_with("[FAIL] X demo"));
        assert!(text.contains("module=m invariant=i instance=x seed=0: d"));
        assert!(text.contains("10 more failures"));
    }
}
