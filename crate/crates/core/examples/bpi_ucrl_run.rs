//! One BPI-UCRL run with diagnostics, checked against the explicit bound.

use optpac::bounds::{theorem1_explicit_bound, theorem1_implicit_check};
use optpac::bpi::{run, BpiConfig};
use optpac::oracles::{gap_report, EnumerationBudget};
use optpac::random_mdp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (epsilon, delta) = (0.3, 0.1);
    let mdp = random_mdp(3, 2, 3, 0, true)?;
    let config = BpiConfig { diagnostics: true, ..BpiConfig::default() };
    let res = run(&mdp, epsilon, delta, &config, &mut ChaCha8Rng::seed_from_u64(7))?;

    println!("stopped after {} episodes (cap hit: {})", res.tau, res.truncated());
    println!(
        "recommended value {:.4}, optimal {:.4}, eps-optimal: {}",
        res.recommended_value, res.optimal_value, res.success
    );
    println!("stopping gap {:.4} (previous {:.4})", res.final_gap, res.previous_gap);

    let d = res.diagnostics.as_ref().expect("diagnostics were requested");
    println!(
        "good event held: {} ({} episodes checked); lemma violations: {}",
        d.good_event.holds(),
        d.good_event.episodes_checked,
        d.lemmas.violations
    );
    let targeted: u64 = d.targets.iter().sum();
    println!("targeting events {targeted}, tau <= sum Z + 1: {}", res.tau <= targeted + 1);

    let gaps = gap_report(&mdp, EnumerationBudget::default())?;
    let bound = theorem1_explicit_bound(&gaps, delta, epsilon)?;
    println!("explicit bound {:.3e} ({:.0}x tau)", bound.value, bound.value / res.tau as f64);
    println!("implicit inequality at tau: {}", theorem1_implicit_check(res.tau, &gaps, delta, epsilon)?);
    Ok(())
}
