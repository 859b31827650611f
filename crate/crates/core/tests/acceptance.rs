//! Acceptance criteria 1 to 8 with pinned seeds; one PASS/FAIL line each.
//!
//! Lines go straight to the stdout handle so they show without `--nocapture`.

use std::io::Write;
use std::time::Instant;

use optpac::harness::criteria::PINNED_MASTER_SEED;
use optpac::harness::verify::all_criteria;

#[test]
fn acceptance_criteria() {
    let start = Instant::now();
    let outcomes = all_criteria(PINNED_MASTER_SEED).expect("pinned instances build");
    let mut out = std::io::stdout().lock();
    writeln!(out, "\n== acceptance (master seed {PINNED_MASTER_SEED}) ==").unwrap();
    for o in &outcomes {
        write!(out, "{o}").unwrap();
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    writeln!(out, "{passed}/{} criteria passed in {:.0} s", outcomes.len(), start.elapsed().as_secs_f64()).unwrap();
    drop(out);
    assert_eq!(outcomes.len(), 8);
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
