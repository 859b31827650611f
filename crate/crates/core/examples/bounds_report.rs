//! Every closed-form bound for the tree instance, with the per-triplet table.

use optpac::bounds::{bound_report, pac_lower_bound, solve_log_inequality, theorem2_t_eps_bound};
use optpac::oracles::{gap_report, EnumerationBudget};
use optpac::{tree_mdp, TreeSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (epsilon, delta) = (0.1, 0.05);
    let mdp = tree_mdp(&TreeSpec::new(8, 3, 4, 0.5).bernoulli())?;
    let gaps = gap_report(&mdp, EnumerationBudget::default())?;
    let report = bound_report(&gaps, delta, epsilon)?;

    for (name, value) in report.summary_rows() {
        println!("{name:<30} {value:.4e}");
    }
    println!("largest contributions:");
    let mut rows = report.contributions.clone();
    rows.sort_by(|a, b| b.explicit.total_cmp(&a.explicit));
    for c in rows.iter().take(5) {
        println!("  ({},{},{}) p_min {:.2} gap {:.2} -> {:.3e}", c.h, c.s, c.a, c.p_min, c.cond_return_gap, c.explicit);
    }

    println!("lower bound vs T_eps bound as S grows (A=3, H=6, eps=0.1, delta=0.01):");
    for s in [4, 8, 16, 32] {
        let lb = pac_lower_bound(s, 3, 0.1, 0.01)?;
        let t = theorem2_t_eps_bound(s, 3, 6, 0.1, 0.01)?;
        println!("  S={s:>2}  lower {lb:>10.1}  T_eps bound {t:>12.1}  ratio {:.5}", lb / t);
    }
    println!("k <= 2 ln k + 30 implies k <= {:.3}", solve_log_inequality(2.0, 30.0)?);

    report.write_contributions_csv(std::io::stdout().lock())?;
    Ok(())
}
