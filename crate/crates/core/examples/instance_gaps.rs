//! Exact gap quantities on the tree instance and a random stochastic MDP.

use optpac::oracles::{check_gap_ordering, gap_report, EnumerationBudget};
use optpac::{random_mdp, tree_mdp, TreeSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tree = tree_mdp(&TreeSpec::new(8, 3, 4, 0.5).bernoulli())?;
    let report = gap_report(&tree, EnumerationBudget::default())?;
    println!("tree: {} policies, {} reachable triplets", report.policies_enumerated, report.num_reachable());
    for ((h, s, a), g) in report.iter().filter(|(_, g)| g.reachable && g.cond_return_gap > 0.0) {
        println!(
            "  ({h},{s},{a}) value gap {:.2}, cond return gap {:.2}, p_min {:.2}",
            g.value_gap, g.cond_return_gap, g.p_min
        );
    }

    let mdp = random_mdp(3, 2, 3, 2, true)?;
    let report = gap_report(&mdp, EnumerationBudget::default())?;
    println!("random S=3 A=2 H=3:");
    println!("  h s a   value   return  cond    p_min   p_max");
    for ((h, s, a), g) in report.iter() {
        if g.reachable {
            println!(
                "  {h} {s} {a}   {:.4}  {:.4}  {:.4}  {:.4}  {:.4}",
                g.value_gap, g.return_gap, g.cond_return_gap, g.p_min, g.p_max
            );
        } else {
            println!("  {h} {s} {a}   unreachable");
        }
    }
    let ordering = check_gap_ordering(&report);
    println!("ordering holds on {} triplets: {}", ordering.triplets_checked, ordering.holds());

    report.write_csv(std::io::stdout().lock())?;
    Ok(())
}
