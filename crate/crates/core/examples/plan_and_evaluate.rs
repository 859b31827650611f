//! Build a small MDP by hand, solve it, and compare a fixed policy with the optimum.

use optpac::mdp::{
    evaluate_policy, optimal_values, visitation_probabilities, DeterministicPolicy, MdpBuilder, RewardModel,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // two states, two actions, three stages; action 1 in state 0 is a risky shortcut
    let mut b = MdpBuilder::new(2, 2, 3);
    for h in 1..=3 {
        b.transition(h, 0, 0, &[1.0, 0.0])
            .reward(h, 0, 0, RewardModel::Bernoulli { mean: 0.4 })
            .transition(h, 0, 1, &[0.3, 0.7])
            .reward(h, 0, 1, RewardModel::Bernoulli { mean: 0.1 })
            .transition(h, 1, 0, &[0.0, 1.0])
            .reward(h, 1, 0, RewardModel::Bernoulli { mean: 0.9 })
            .transition(h, 1, 1, &[1.0, 0.0])
            .reward(h, 1, 1, RewardModel::Bernoulli { mean: 0.0 });
    }
    let mdp = b.build()?;

    let opt = optimal_values(&mdp);
    println!("V*_1(s_1) = {:.4}", opt.values.v(1, 0));
    for h in 1..=3 {
        println!("stage {h}: pi*(0) = {}, pi*(1) = {}", opt.policy.action(h, 0), opt.policy.action(h, 1));
    }

    let lazy = DeterministicPolicy::first_available(mdp.shape());
    let v = evaluate_policy(&mdp, &lazy)?;
    println!("always action 0: V = {:.4} (gap {:.4})", v.v(1, 0), opt.values.v(1, 0) - v.v(1, 0));

    let visit = visitation_probabilities(&mdp, &opt.policy, None)?;
    for h in 1..=3 {
        println!("stage {h}: P(s=0) = {:.3}, P(s=1) = {:.3}", visit.state(h, 0), visit.state(h, 1));
    }
    Ok(())
}
