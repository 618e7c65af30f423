//! Randomised self-checks: the mixture/average-prior equivalence for Bayes
//! and for distorted-likelihood updating, and brute-force optimality of the
//! two-stage elicitation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{
    bayes_posterior, distorted_mixture_update, distorted_posterior, mixture_bayes_update, Distortion,
    MixtureBelief, SignalModel,
};
use crate::elicitation::{bdm_expected_payoff, optimal_point_report, BdmConfig, ReportWindow, SecondOrderBelief, GRID_POINTS};
use crate::record::Signal;

/// Largest tolerated gap between the two sides of an equivalence.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub trials: usize,
    pub checks: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub violations: usize,
    pub first_violation: Option<String>,
}

impl SuiteReport {
    fn new(name: &str, trials: usize, tolerance: f64) -> Self {
        Self { name: name.into(), trials, checks: 0, max_error: 0.0, tolerance, violations: 0, first_violation: None }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn record(&mut self, error: f64, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if error.is_nan() || error >= self.tolerance {
            self.violate(describe());
        }
        if error > self.max_error {
            self.max_error = error;
        }
    }

    fn violate(&mut self, message: String) {
        self.violations += 1;
        if self.first_violation.is_none() {
            self.first_violation = Some(message);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub trials: usize,
    pub seed: u64,
    /// Replace the distortion suite's maps with one that takes a negative
    /// value, to confirm that violations are reported.
    pub inject_negative_distortion: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { trials: 10_000, seed: 0, inject_negative_distortion: false }
    }
}

/// Random binary mixture with 1 to 10 components, priors and weights uniform.
pub fn random_mixture(rng: &mut impl Rng) -> MixtureBelief {
    let n = rng.random_range(1..=10);
    let raw: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>() + 1e-9)).collect();
    let total: f64 = raw.iter().map(|p| p.1).sum();
    let mut pairs: Vec<(f64, f64)> = raw.iter().map(|&(p, w)| (p, w / total)).collect();
    // Put any rounding residue on the last weight.
    let sum: f64 = pairs.iter().map(|p| p.1).sum();
    pairs[n - 1].1 += 1.0 - sum;
    MixtureBelief::from_success_probs(&pairs).expect("random mixture is valid")
}

fn random_model(rng: &mut impl Rng) -> (f64, SignalModel) {
    let accuracy = if rng.random::<bool>() { 0.6 } else { 0.8 };
    (accuracy, SignalModel::symmetric(accuracy).expect("valid accuracy"))
}

/// Averaging the component posteriors of the reweighted mixture equals Bayes
/// on the average prior.
pub fn mixture_equivalence_suite(config: &VerifyConfig) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = SuiteReport::new("mixture-bayes-equivalence", config.trials, EQUIVALENCE_TOLERANCE);
    for trial in 0..config.trials {
        let mix = random_mixture(&mut rng);
        let (accuracy, model) = random_model(&mut rng);
        for signal in Signal::ALL {
            let lhs = mixture_bayes_update(&mix, signal.index(), &model).map(|u| u.average_success());
            let rhs = bayes_posterior(mix.average_success(), signal, &model);
            match (lhs, rhs) {
                (Ok(a), Ok(b)) => report.record((a - b).abs(), || {
                    format!("trial {trial}: accuracy {accuracy}, {signal}: {a} vs {b}")
                }),
                (a, b) => {
                    report.checks += 1;
                    report.violate(format!("trial {trial}: evaluation failed ({a:?}, {b:?})"));
                }
            }
        }
    }
    report
}

fn random_distortion(rng: &mut impl Rng, model: &SignalModel) -> Distortion {
    if rng.random::<bool>() {
        Distortion::Power(3.0 * rng.random::<f64>())
    } else {
        Distortion::tabulate_for(model, |_| 0.01 + 2.0 * rng.random::<f64>()).expect("positive map")
    }
}

/// The same equivalence for distorted-likelihood updating with random power
/// and tabulated distortions.
pub fn distorted_equivalence_suite(config: &VerifyConfig) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut report = SuiteReport::new("distorted-equivalence", config.trials, EQUIVALENCE_TOLERANCE);
    for trial in 0..config.trials {
        let mix = random_mixture(&mut rng);
        let (accuracy, model) = random_model(&mut rng);
        let distortion = if config.inject_negative_distortion {
            Distortion::Tabulated(alloc::vec![(accuracy, -0.5), (1.0 - accuracy, 0.7)])
        } else {
            random_distortion(&mut rng, &model)
        };
        for signal in Signal::ALL {
            let lhs = distorted_mixture_update(&mix, signal.index(), &model, &distortion).map(|u| u.average_success());
            let rhs = distorted_posterior(mix.average_success(), signal, &model, &distortion);
            match (lhs, rhs) {
                (Ok(a), Ok(b)) => report.record((a - b).abs(), || {
                    format!("trial {trial}: {distortion:?}, {signal}: {a} vs {b}")
                }),
                (a, b) => {
                    report.checks += 1;
                    let err = a.err().or(b.err()).expect("one side failed");
                    report.violate(format!("trial {trial}: {distortion:?} rejected: {err}"));
                }
            }
        }
    }
    report
}

/// Random second-order belief: sparse (a few atoms) or dense.
pub fn random_second_order_belief(rng: &mut impl Rng) -> SecondOrderBelief {
    let mut weights = alloc::vec![0.0; GRID_POINTS];
    if rng.random::<bool>() {
        for _ in 0..rng.random_range(1..=6) {
            weights[rng.random_range(0..GRID_POINTS)] += rng.random::<f64>() + 1e-6;
        }
    } else {
        for w in &mut weights {
            *w = rng.random::<f64>();
        }
    }
    SecondOrderBelief::from_weights(weights).expect("positive weights")
}

/// Exhaustive search over reports `p` in 0..=100 and confidences `q` on a
/// 0.01 grid never beats the analytic optimum (window mode, `q = q*`).
pub fn elicitation_suite(config: &VerifyConfig, beliefs: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let bdm = BdmConfig::default();
    let window = ReportWindow::default();
    let w = i64::from(window.half_width);
    let mut report = SuiteReport::new("elicitation-optimality", beliefs, 1e-12);
    for trial in 0..beliefs {
        let belief = random_second_order_belief(&mut rng);
        let mass = belief.mass();
        let optimum = optimal_point_report(&belief, window);
        let analytic = bdm_expected_payoff(optimum.q_star, optimum.q_star, bdm).expect("q* is a probability");
        let mut best = (f64::NEG_INFINITY, 0u8, 0.0);
        for p in 0..=100i64 {
            let m: f64 = (0..=100i64).filter(|j| (j - p).abs() <= w).map(|j| mass[j as usize]).sum();
            for qi in 0..=100 {
                let q = f64::from(qi) / 100.0;
                let payoff = bdm.prize * (q * m + 0.5 - q * q / 2.0);
                if payoff > best.0 {
                    best = (payoff, p as u8, q);
                }
            }
        }
        // The grid cannot beat the continuous optimum; its best report must
        // carry the same window mass as the analytic one.
        let excess = (best.0 - analytic).max(0.0);
        let best_mass: f64 = (0..=100i64).filter(|j| (j - i64::from(best.1)).abs() <= w).map(|j| mass[j as usize]).sum();
        let mass_gap = (optimum.q_star - best_mass).max(0.0);
        report.record(excess.max(if mass_gap > 1e-9 { mass_gap } else { 0.0 }), || {
            format!(
                "belief {trial}: grid optimum (p={}, q={}) pays {} vs analytic (p={}, q={}) {}",
                best.1, best.2, best.0, optimum.report, optimum.q_star, analytic
            )
        });
    }
    report
}

/// Runs every suite; the elicitation suite uses `min(trials, 1000)` beliefs.
pub fn run_all(config: &VerifyConfig) -> Vec<SuiteReport> {
    alloc::vec![
        mixture_equivalence_suite(config),
        distorted_equivalence_suite(config),
        elicitation_suite(config, config.trials.min(1000)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_runs() {
        let config = VerifyConfig { trials: 300, seed: 3, inject_negative_distortion: false };
        for report in run_all(&config) {
            assert!(report.passed(), "{report:?}");
            assert!(report.checks > 0);
        }
    }

    #[test]
    fn negative_distortion_is_reported() {
        let config = VerifyConfig { trials: 10, seed: 3, inject_negative_distortion: true };
        let report = distorted_equivalence_suite(&config);
        assert!(!report.passed());
        assert_eq!(report.violations, 20);
        assert!(report.first_violation.unwrap().contains("rejected"));
    }

    #[test]
    fn random_mixtures_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let m = random_mixture(&mut rng);
            assert!((1..=10).contains(&m.len()));
        }
    }
}
