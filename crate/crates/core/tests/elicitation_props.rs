use belieflab_core::elicitation::{
    bdm_expected_payoff, optimal_point_report, optimal_point_report_near, payment_draw, resolve_bdm, window_mass,
    BdmConfig, PaymentKind, ReportWindow, SecondOrderBelief,
};
use belieflab_core::simulation::{simulate_experiment, AgentSpec, SimulationConfig};
use belieflab_core::verify::random_second_order_belief;
use belieflab_core::Signal;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W: ReportWindow = ReportWindow { half_width: 3 };
const Y: BdmConfig = BdmConfig { prize: 3.0 };

fn brute_window_mass(mass: &[f64], p: i32) -> f64 {
    (0..=100i32).filter(|j| (j - p).abs() <= 3).map(|j| mass[j as usize]).sum()
}

/// Expected BDM payoff by integrating the realised payoff over the uniform
/// draw `x` (midpoint rule); the lottery branch pays with probability `x`.
fn integrated_payoff(q: f64, hit: f64) -> f64 {
    let n = 20_000;
    let mut total = 0.0;
    for i in 0..n {
        let x = (i as f64 + 0.5) / n as f64;
        total += if x <= q { Y.prize * hit } else { Y.prize * x };
    }
    total / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn truthful_confidence_maximises_expected_payoff(q_star in 0.0..=1.0f64, q in 0.0..=1.0f64) {
        let best = bdm_expected_payoff(q_star, q_star, Y).unwrap();
        prop_assert!(bdm_expected_payoff(q, q_star, Y).unwrap() <= best + 1e-15);
    }

    #[test]
    fn payoff_is_concave_in_q_and_monotone_in_hit_probability(q in 0.01..0.99f64, h in 0.001..0.01f64, q_star in 0.0..0.99f64) {
        let f = |x: f64| bdm_expected_payoff(x, q_star, Y).unwrap();
        prop_assert!(f(q - h) + f(q + h) - 2.0 * f(q) <= 1e-12);
        let g = |s: f64| bdm_expected_payoff(q, s, Y).unwrap();
        prop_assert!(g(q_star + 0.01) > g(q_star));
    }

    #[test]
    fn closed_form_matches_integrated_mechanism(q in 0.0..=1.0f64, hit in 0.0..=1.0f64) {
        let closed = bdm_expected_payoff(q, hit, Y).unwrap();
        // The quadrature step straddling the jump at `x = q` is off by at
        // most one cell of width 1/20000.
        prop_assert!((closed - integrated_payoff(q, hit)).abs() <= Y.prize / 20_000.0 + 1e-12);
    }

    #[test]
    fn window_mass_matches_brute_force(seed in any::<u64>()) {
        let belief = random_second_order_belief(&mut ChaCha8Rng::seed_from_u64(seed));
        for p in 0..=100u8 {
            let got = window_mass(&belief, p, W).unwrap();
            prop_assert!((got - brute_window_mass(belief.mass(), i32::from(p))).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_report_is_incentive_compatible(seed in any::<u64>()) {
        let belief = random_second_order_belief(&mut ChaCha8Rng::seed_from_u64(seed));
        let opt = optimal_point_report(&belief, W);
        let best = bdm_expected_payoff(opt.q_star, opt.q_star, Y).unwrap();
        for p in 0..=100 {
            let m = brute_window_mass(belief.mass(), p).min(1.0);
            for qi in 0..=50 {
                let q = f64::from(qi) / 50.0;
                prop_assert!(Y.prize * (q * m + 0.5 - q * q / 2.0) <= best + 1e-12);
            }
        }
        // The anchored variant is another maximiser.
        let near = optimal_point_report_near(&belief, W, 100.0 * belief.mean());
        prop_assert_eq!(near.q_star, opt.q_star);
        prop_assert!((brute_window_mass(belief.mass(), i32::from(near.report)) - opt.q_star).abs() < 1e-12);
    }
}

#[test]
fn window_is_inclusive_at_three_points() {
    assert!(W.contains(53.0, 50.0));
    assert!(W.contains(47.0, 50.0));
    assert!(!W.contains(53.5, 50.0));
    assert!(!W.contains(46.0, 50.0));
    // Posteriors are rarely integers; only exact distance counts.
    assert!(W.contains(40.0, 42.857_142_857));
}

#[test]
fn point_mass_report_is_itself_with_full_confidence() {
    let belief = SecondOrderBelief::point_mass(70).unwrap();
    let near = optimal_point_report_near(&belief, W, 70.0);
    assert_eq!((near.report, near.q_star, near.confidence_pp()), (70, 1.0, 100));
}

#[test]
fn realised_bdm_matches_expectation_on_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for (q, hit) in [(0.3, 0.7), (0.9, 0.5), (0.0, 1.0)] {
        let n = 200_000;
        let mut total = 0.0;
        for _ in 0..n {
            let x: f64 = rng.random();
            let correct = rng.random::<f64>() < hit;
            let roll = if x > q { Some(rng.random()) } else { None };
            total += resolve_bdm(q, x, correct, roll, Y).unwrap();
        }
        let mean = total / n as f64;
        assert!((mean - bdm_expected_payoff(q, hit, Y).unwrap()).abs() < 0.02, "q={q}: {mean}");
    }
}

#[test]
fn payment_draws_are_seeded_and_never_pay_a_negative_degenerate_branch() {
    let data = simulate_experiment(&SimulationConfig::single(AgentSpec::default(), 3, 5)).unwrap();
    let subject: Vec<_> = data.records.iter().filter(|r| r.subject_id == "S001").cloned().collect();
    let a = payment_draw(&subject, 11).unwrap();
    assert_eq!(a, payment_draw(&subject, 11).unwrap());
    let kinds: Vec<PaymentKind> = a.draws.iter().map(|d| d.kind).collect();
    assert_eq!(kinds, PaymentKind::ALL.to_vec());
    let mut redraws = 0;
    for seed in 0..2_000 {
        let p = payment_draw(&subject, seed).unwrap();
        assert!((p.total() - p.draws.iter().map(|d| d.payoff).sum::<f64>()).abs() < 1e-12);
        for d in &p.draws {
            assert!(d.payoff == 0.0 || d.payoff == Y.prize);
            if d.actual_prior == 0 {
                assert_eq!(d.signal, Signal::Positive);
                assert!(!d.success);
            }
            redraws += d.redraws;
        }
    }
    // A zero-prior task comes up in about one draw in eleven and yields a
    // negative signal most of the time, so redraws must have happened.
    assert!(redraws > 0);
}
