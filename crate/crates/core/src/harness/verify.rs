//! Named verification suites built from the shared criteria.

use std::fmt;
use std::str::FromStr;

use super::criteria::{
    bound_consistency, bound_dominance, gap_ordering, good_event_frequency, lemma_checks, lemma_grids,
    oracle_cross_validation, pac_correctness, regret_separation, targeting, Campaign, CriterionOutcome, PinnedInstance,
    GAP_INSTANCES, GOOD_EVENT_RUNS, MC_EPISODES, NAIVE_INSTANCES, PAC_RUNS, REGRET_SEEDS, TARGETING_RUNS,
};
use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    /// Gap ordering and oracle cross-validation.
    Gaps,
    /// Bound-evaluator grids and consistency.
    Bounds,
    /// PAC correctness and bound dominance on the three pinned instances.
    Pac,
    /// Targeting identities on pinned good-event runs.
    Targeting,
    /// Good-event frequency and per-episode lemma checks.
    Goodevent,
    /// Regret-to-PAC separation on the tree instance.
    Regret,
    /// Every acceptance criterion.
    All,
}

impl FromStr for Suite {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Suite as clap::ValueEnum>::from_str(s, true).map_err(HarnessError::Config)
    }
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub suite: Suite,
    pub outcomes: Vec<CriterionOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.outcomes {
            write!(f, "{o}")?;
        }
        let n = self.outcomes.iter().filter(|o| o.passed).count();
        writeln!(f, "{n}/{} passed", self.outcomes.len())
    }
}

/// Runs a suite with pinned seeds derived from `master_seed`.
pub fn verify(suite: Suite, master_seed: u64) -> Result<VerifyReport, HarnessError> {
    let outcomes = match suite {
        Suite::Gaps => vec![
            gap_ordering(master_seed, GAP_INSTANCES),
            oracle_cross_validation(master_seed, MC_EPISODES, NAIVE_INSTANCES)?,
        ],
        Suite::Bounds => vec![lemma_grids(), bound_consistency()?],
        Suite::Pac => {
            let campaigns = pac_campaigns(master_seed)?;
            let refs: Vec<&Campaign> = campaigns.iter().collect();
            vec![pac_correctness(&refs, PAC_RUNS), bound_dominance(&refs, PAC_RUNS)]
        }
        Suite::Targeting => {
            let mut c = Campaign::new(PinnedInstance::Stochastic, true, master_seed)?;
            c.extend_until_good(TARGETING_RUNS, GOOD_EVENT_RUNS);
            vec![targeting(&c, TARGETING_RUNS)]
        }
        Suite::Goodevent => {
            let c = Campaign::with_runs(PinnedInstance::Stochastic, GOOD_EVENT_RUNS, true, master_seed)?;
            vec![good_event_frequency(&c, GOOD_EVENT_RUNS), lemma_checks(&c)]
        }
        Suite::Regret => vec![regret_separation(master_seed, REGRET_SEEDS)?],
        Suite::All => all_criteria(master_seed)?,
    };
    Ok(VerifyReport { suite, outcomes })
}

/// The three PAC campaigns; the stochastic one carries diagnostics and
/// `GOOD_EVENT_RUNS` runs so it can feed the good-event criteria too.
pub fn pac_campaigns(master_seed: u64) -> Result<Vec<Campaign>, HarnessError> {
    Ok(vec![
        Campaign::with_runs(PinnedInstance::Deterministic, PAC_RUNS, false, master_seed)?,
        Campaign::with_runs(PinnedInstance::Stochastic, GOOD_EVENT_RUNS, true, master_seed)?,
        Campaign::with_runs(PinnedInstance::Tree, PAC_RUNS, false, master_seed)?,
    ])
}

/// Criteria 1 to 8 in order.
pub fn all_criteria(master_seed: u64) -> Result<Vec<CriterionOutcome>, HarnessError> {
    let campaigns = pac_campaigns(master_seed)?;
    let refs: Vec<&Campaign> = campaigns.iter().collect();
    let sto = &campaigns[1];
    Ok(vec![
        pac_correctness(&refs, PAC_RUNS),
        gap_ordering(master_seed, GAP_INSTANCES),
        bound_dominance(&refs, PAC_RUNS),
        targeting(sto, TARGETING_RUNS),
        good_event_frequency(sto, GOOD_EVENT_RUNS),
        lemma_checks(sto),
        regret_separation(master_seed, REGRET_SEEDS)?,
        oracle_cross_validation(master_seed, MC_EPISODES, NAIVE_INSTANCES)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!("goodevent".parse::<Suite>().unwrap(), Suite::Goodevent);
        assert_eq!("GAPS".parse::<Suite>().unwrap(), Suite::Gaps);
        assert!(matches!("nope".parse::<Suite>(), Err(HarnessError::Config(_))));
    }

    #[test]
    fn bounds_suite_passes() {
        let report = verify(Suite::Bounds, 0).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.to_string().ends_with("2/2 passed\n"));
    }
}
