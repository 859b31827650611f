//! Closed-form quantities against values frozen from a 50-digit mpmath evaluation.

use optpac::bounds::{
    beta_upper, c_epsilon, chain_bound, implicit_fixed_point, pac_lower_bound, solve_log_inequality,
    theorem1_explicit_bound, theorem2_t_eps_bound, worst_case_bound,
};
use optpac::bpi::{threshold_beta, threshold_beta_p, threshold_beta_r, Thresholds};
use optpac::ucbvi::{early_stage_bonus, stage_h_bonus};
use optpac::{gap_report, EnumerationBudget, Mdp, MdpBuilder, RewardModel};

fn close(got: f64, want: f64, rel: f64) {
    assert!((got - want).abs() <= rel * want.abs(), "got {got}, want {want}");
}

#[test]
fn beta_at_small_shape() {
    close(threshold_beta_r(10.0, 0.1, 2, 2, 2).unwrap(), 4.439_267_098_070_181, 1e-14);
    close(threshold_beta_p(10.0, 0.1, 2, 2, 2).unwrap(), 8.878_534_196_140_362, 1e-14);
    close(threshold_beta(10.0, 0.1, 2, 2, 2).unwrap(), 39.953_403_882_631_63, 1e-14);
}

#[test]
fn beta_r_at_zero_is_half_log_plus_one() {
    let th = Thresholds::new(3, 2, 4, 0.05).unwrap();
    close(th.beta_r(0.0), 0.5 * ((72.0f64 / 0.05).ln() + 1.0), 1e-15);
}

#[test]
fn ucbvi_stage_h_bonus_values() {
    // raw value 2.2207 at n = 4 is clipped
    assert_eq!(stage_h_bonus(4, 10, 8, 3, 4), 1.0);
    close(stage_h_bonus(40, 10, 8, 3, 4), 0.702_234_489_256_112_8, 1e-14);
    close(stage_h_bonus(1000, 1000, 8, 3, 4), 0.195_310_040_346_071_6, 1e-14);
}

#[test]
fn ucbvi_early_bonus_values() {
    // raw 3.0398 is clipped to the range H - h + 1 = 3
    assert_eq!(early_stage_bonus(1, 5, 7, 2, 2, 3), 3.0);
    close(early_stage_bonus(1, 200, 7, 2, 2, 3), 1.670_381_824_400_255_8, 1e-13);
}

#[test]
fn pac_lower_bound_tree() {
    // 24 ln 25 / 0.16
    close(pac_lower_bound(8, 3, 0.1, 0.01).unwrap(), 482.831_373_730_230_1, 1e-14);
}

#[test]
fn t_eps_bound_and_worst_case() {
    close(theorem2_t_eps_bound(8, 3, 4, 0.2, 0.1).unwrap(), 161_653.310_791_847_77, 1e-13);
    close(worst_case_bound(8, 3, 4, 0.1, 0.1).unwrap(), 1_414_708.281_135_541_7, 1e-13);
}

#[test]
fn log_inequality_solver_values() {
    close(solve_log_inequality(1.0, 1.0).unwrap(), 2.098_612_288_668_109_7, 1e-15);
    close(solve_log_inequality(1.0, 1e6).unwrap(), 1_000_014.508_658_238_5, 1e-15);
    close(solve_log_inequality(3.0, 7.0).unwrap(), 16.406_482_647_787_45, 1e-15);
}

#[test]
fn beta_upper_grid_points() {
    // (t, S, A, H, delta, beta_upper(t), beta(t - 1))
    let points = [
        (1.0, 2, 1, 1, 0.5, 20.424_533_248_94, 15.682_079_924_046),
        (100.0, 5, 3, 4, 0.01, 161.094_038_904_153_34, 101.914_584_377_994_93),
        (1e6, 15, 2, 3, 0.1, 928.435_668_737_818_5, 495.411_658_363_528_4),
    ];
    for (t, s, a, h, delta, upper, beta) in points {
        close(beta_upper(t, s, a, h, delta), upper, 1e-13);
        close(threshold_beta(t - 1.0, delta, s, a, h).unwrap(), beta, 1e-13);
        assert!(beta <= upper);
    }
}

fn two_arm_bandit() -> Mdp {
    let mut b = MdpBuilder::new(1, 2, 1);
    b.deterministic_transition(1, 0, 0, 0)
        .deterministic_transition(1, 0, 1, 0)
        .reward(1, 0, 0, RewardModel::Bernoulli { mean: 0.9 })
        .reward(1, 0, 1, RewardModel::Bernoulli { mean: 0.4 });
    b.build().unwrap()
}

#[test]
fn bandit_bounds() {
    let gaps = gap_report(&two_arm_bandit(), EnumerationBudget::default()).unwrap();
    close(c_epsilon(&gaps, 0.1).unwrap(), 104.0, 1e-14);
    close(theorem1_explicit_bound(&gaps, 0.1, 0.1).unwrap().value, 2_780_345.393_671_920_7, 1e-13);
    close(chain_bound(&gaps, 0.1, 0.1).unwrap(), 2_662_758.952_008_724, 1e-13);
    assert_eq!(implicit_fixed_point(&gaps, 0.1, 0.1).unwrap(), 518_238.0);
}
