//! UCBVI on the Gaussian tree: exact regret, uniform draws from the played
//! policies, and a small seed-averaged estimate of T_eps.

use optpac::ucbvi::{eps_bad_fraction, measure_t_epsilon, regret_to_pac_sample, run_regret};
use optpac::{tree_mdp, TreeSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (gap, epsilon, delta) = (0.2, 0.1, 0.1);
    let mdp = tree_mdp(&TreeSpec::new(8, 3, 4, gap))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let trace = run_regret(&mdp, 20_000, &mut rng);
    let bad_pulls = trace.regret.iter().filter(|&&r| r > 0.0).count();
    for t in [10, 100, 1_000, 10_000, 20_000] {
        println!("T={t:>6}  R(T)={:>8.2}  R(T)/T={:.5}", trace.cumulative[t - 1], trace.average(t));
    }
    println!("suboptimal episodes: {bad_pulls} (R(T) = gap x pulls: {:.2})", gap * bad_pulls as f64);
    println!("distinct policies played: {}", trace.policies.len());

    let drawn = regret_to_pac_sample(&trace, &mut rng);
    println!("drawn policy picks action {} at the reward state", drawn.action(4, 7));
    let frac = eps_bad_fraction(&trace, trace.len(), epsilon, 1_000, &mut rng);
    println!("eps-bad fraction over 1000 draws: {frac:.3}");

    let est = measure_t_epsilon(&mdp, gap, delta, 20_000, 8, &mut rng);
    println!(
        "T_eps over {} seeds: first crossing {:?}, stays below from {:?}",
        est.seeds.len(),
        est.t_epsilon,
        est.sustained_crossing(est.threshold())
    );
    Ok(())
}
