use belieflab_core::belief::{
    bayes_posterior, distorted_mixture_update, distorted_posterior, fbu_update, grether_posterior, mixture_bayes_update,
    mlu_update, update_decomposition,
};
use belieflab_core::{Distortion, GretherParams, MixtureBelief, Signal, SignalModel};
use proptest::prelude::*;

fn mixture(raw: &[(f64, f64)]) -> MixtureBelief {
    let total: f64 = raw.iter().map(|c| c.1).sum();
    let mut pairs: Vec<(f64, f64)> = raw.iter().map(|&(p, w)| (p, w / total)).collect();
    let residue = 1.0 - pairs.iter().map(|c| c.1).sum::<f64>();
    pairs.last_mut().unwrap().1 += residue;
    MixtureBelief::from_success_probs(&pairs).unwrap()
}

fn components() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..=1.0f64, 0.001..1.0f64), 1..=10)
}

fn accuracy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.6), Just(0.8)]
}

fn signal() -> impl Strategy<Value = Signal> {
    prop_oneof![Just(Signal::Positive), Just(Signal::Negative)]
}

/// Hand-written two-state Bayes, independent of the library's update path.
fn oracle_bayes(p: f64, signal: Signal, acc: f64) -> f64 {
    let (ls, lf) = match signal {
        Signal::Positive => (acc, 1.0 - acc),
        Signal::Negative => (1.0 - acc, acc),
    };
    p * ls / (p * ls + (1.0 - p) * lf)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mixture_average_equals_average_prior_posterior(raw in components(), acc in accuracy(), s in signal()) {
        let mix = mixture(&raw);
        let model = SignalModel::symmetric(acc).unwrap();
        let lhs = mixture_bayes_update(&mix, s.index(), &model).unwrap().average_success();
        let rhs = oracle_bayes(mix.average_success(), s, acc);
        prop_assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn distorted_mixture_equals_distorted_average(raw in components(), acc in accuracy(), s in signal(), a in 0.0..=3.0f64) {
        let mix = mixture(&raw);
        let model = SignalModel::symmetric(acc).unwrap();
        let t = Distortion::power(a).unwrap();
        let lhs = distorted_mixture_update(&mix, s.index(), &model, &t).unwrap().average_success();
        let p = mix.average_success();
        let (ls, lf) = match s { Signal::Positive => (acc, 1.0 - acc), Signal::Negative => (1.0 - acc, acc) };
        let rhs = p * ls.powf(a) / (p * ls.powf(a) + (1.0 - p) * lf.powf(a));
        prop_assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn tabulated_distortions_satisfy_equivalence(raw in components(), acc in accuracy(), s in signal(), t_hi in 0.01..2.0f64, t_lo in 0.01..2.0f64) {
        let mix = mixture(&raw);
        let model = SignalModel::symmetric(acc).unwrap();
        let t = Distortion::tabulated(vec![(acc, t_hi), (1.0 - acc, t_lo)]).unwrap();
        let lhs = distorted_mixture_update(&mix, s.index(), &model, &t).unwrap().average_success();
        let rhs = distorted_posterior(mix.average_success(), s, &model, &t).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn posterior_is_monotone_in_prior(a in 0.0..=1.0f64, b in 0.0..=1.0f64, acc in accuracy(), s in signal()) {
        let model = SignalModel::symmetric(acc).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(bayes_posterior(lo, s, &model).unwrap() <= bayes_posterior(hi, s, &model).unwrap());
    }

    #[test]
    fn signals_move_interior_priors_in_their_direction(p in 0.001..0.999f64, acc in accuracy()) {
        let model = SignalModel::symmetric(acc).unwrap();
        prop_assert!(bayes_posterior(p, Signal::Positive, &model).unwrap() > p);
        prop_assert!(bayes_posterior(p, Signal::Negative, &model).unwrap() < p);
    }

    #[test]
    fn complement_symmetry(p in 0.0..=1.0f64, acc in accuracy()) {
        let model = SignalModel::symmetric(acc).unwrap();
        let up = bayes_posterior(p, Signal::Positive, &model).unwrap();
        let down = bayes_posterior(1.0 - p, Signal::Negative, &model).unwrap();
        prop_assert!((up - (1.0 - down)).abs() < 1e-14);
    }

    #[test]
    fn fixed_weights_attenuate_the_update(raw in components(), acc in accuracy()) {
        // Reweighting toward priors that predicted the signal pushes the
        // average further in the signal's direction.
        let mix = mixture(&raw);
        let model = SignalModel::symmetric(acc).unwrap();
        let up = update_decomposition(&mix, Signal::Positive.index(), &model).unwrap();
        let down = update_decomposition(&mix, Signal::Negative.index(), &model).unwrap();
        prop_assert!(up.reweighting_delta[0] >= -1e-15);
        prop_assert!(down.reweighting_delta[0] <= 1e-15);
        let total = mixture_bayes_update(&mix, 0, &model).unwrap().average;
        prop_assert!((up.total()[0] - total[0]).abs() < 1e-12);
    }

    #[test]
    fn fbu_is_the_weighted_component_average(raw in components(), acc in accuracy(), s in signal()) {
        let mix = mixture(&raw);
        let model = SignalModel::symmetric(acc).unwrap();
        let fbu = fbu_update(&mix, s.index(), &model).unwrap();
        let oracle: f64 = mix.components().iter().map(|c| c.weight * oracle_bayes(c.prior[0], s, acc)).sum();
        prop_assert!((fbu.average_success() - oracle).abs() < 1e-12);
        for (before, after) in mix.components().iter().zip(fbu.posterior.components()) {
            prop_assert_eq!(before.weight, after.weight);
        }
    }

    #[test]
    fn mlu_picks_the_extreme_prior_in_the_signal_direction(raw in components(), acc in accuracy()) {
        let mix = mixture(&raw);
        let model = SignalModel::symmetric(acc).unwrap();
        let max = raw.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let min = raw.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let up = mlu_update(&mix, Signal::Positive.index(), &model).unwrap();
        let down = mlu_update(&mix, Signal::Negative.index(), &model).unwrap();
        prop_assert!((up[0] - oracle_bayes(max, Signal::Positive, acc)).abs() < 1e-12);
        prop_assert!((down[0] - oracle_bayes(min, Signal::Negative, acc)).abs() < 1e-12);
    }

    #[test]
    fn grether_matches_closed_form(p in 0.001..0.999f64, acc in accuracy(), s in signal(), alpha in 0.0..=2.0f64, beta in 0.0..=2.0f64) {
        let model = SignalModel::symmetric(acc).unwrap();
        let got = grether_posterior(p, s, &model, GretherParams::new(alpha, beta).unwrap()).unwrap();
        let sign = if s == Signal::Positive { 1.0 } else { -1.0 };
        let log_odds = alpha * sign * (acc / (1.0 - acc)).ln() + beta * (p / (1.0 - p)).ln();
        prop_assert!((got - 1.0 / (1.0 + (-log_odds).exp())).abs() < 1e-12);
    }
}

#[test]
fn grether_nests_bayes_on_the_percent_grid() {
    for pp in 0..=100u32 {
        let p = f64::from(pp) / 100.0;
        for acc in [0.6, 0.8] {
            let model = SignalModel::symmetric(acc).unwrap();
            for s in Signal::ALL {
                let g = grether_posterior(p, s, &model, GretherParams::BAYES).unwrap();
                let b = bayes_posterior(p, s, &model).unwrap();
                assert!((g - b).abs() <= 1e-14, "p={p} acc={acc} {s}: {g} vs {b}");
                let unit_power = distorted_posterior(p, s, &model, &Distortion::Power(1.0)).unwrap();
                assert!((unit_power - b).abs() <= 1e-15);
            }
        }
    }
}

#[test]
fn point_mass_mixture_is_plain_bayes() {
    let model = SignalModel::symmetric(0.8).unwrap();
    let mix = MixtureBelief::from_success_probs(&[(0.3, 1.0)]).unwrap();
    let got = mixture_bayes_update(&mix, 0, &model).unwrap().average_success();
    assert!((got - 0.3 * 0.8 / (0.3 * 0.8 + 0.7 * 0.2)).abs() < 1e-15);
}
