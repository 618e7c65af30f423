//! Two-stage belief + confidence elicitation.
//!
//! Stage one pays a fixed prize when the reported belief lands within a
//! window (three points by default) of the truth. Stage two asks for the
//! switching point `q` of a BDM choice between that bet and an objective
//! lottery paying the same prize with probability `x ~ U[0, 1]`. With a
//! subjective hit probability `q*`, the expected payoff is
//! `y (q q* + 1/2 - q^2/2)`, maximised at `q = q*`. Reporting the point with
//! the largest window mass therefore stays optimal when the confidence stage
//! is appended.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{bayes_posterior, MixtureBelief, SignalModel};
use crate::math;
use crate::record::{ResponseRecord, Signal, Treatment};

/// Number of grid points, 0..=100.
pub const GRID_POINTS: usize = 101;

/// Absolute slack on the window comparison so that exact reals such as
/// `90.3226 - 87.3226` do not miss by a rounding error.
const WINDOW_SLACK: f64 = 1e-9;

/// Guard against a session whose only reachable draw is forever rejected.
const MAX_REDRAWS: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElicitationError {
    #[error("second-order belief must have {GRID_POINTS} nonnegative entries summing to 1 (sum={sum})")]
    InvalidBelief { sum: f64 },
    #[error("point {0} is outside 0..=100")]
    PointOutOfRange(u32),
    #[error("{0} is not a probability")]
    InvalidProbability(f64),
    #[error("the lottery branch was selected but no lottery draw was supplied")]
    MissingLotteryDraw,
    #[error("incomplete session: {0}")]
    IncompleteSession(String),
    #[error("payment draw kept landing on the negative branch of the degenerate task")]
    RedrawLimit,
}

pub type Result<T> = core::result::Result<T, ElicitationError>;

/// Distribution over the 101 integer percentages a prior could take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderBelief {
    mass: Vec<f64>,
}

impl SecondOrderBelief {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        let sum: f64 = mass.iter().sum();
        if mass.len() != GRID_POINTS
            || mass.iter().any(|m| !(m.is_finite() && *m >= 0.0))
            || (sum - 1.0).abs() > 1e-12
        {
            return Err(ElicitationError::InvalidBelief { sum });
        }
        Ok(Self { mass })
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if sum.is_nan() || sum <= 0.0 {
            return Err(ElicitationError::InvalidBelief { sum });
        }
        for w in &mut weights {
            *w /= sum;
        }
        Self::new(weights)
    }

    pub fn point_mass(point: u8) -> Result<Self> {
        let idx = check_point(u32::from(point))?;
        let mut mass = vec![0.0; GRID_POINTS];
        mass[idx] = 1.0;
        Ok(Self { mass })
    }

    /// Equal mass on every point of `lo..=hi`.
    pub fn uniform(lo: u8, hi: u8) -> Result<Self> {
        let (lo, hi) = (check_point(u32::from(lo))?, check_point(u32::from(hi))?);
        let mut weights = vec![0.0; GRID_POINTS];
        for w in &mut weights[lo.min(hi)..=hi.max(lo)] {
            *w = 1.0;
        }
        Self::from_weights(weights)
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Mean prior as a probability.
    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(i, m)| m * i as f64).sum::<f64>() / 100.0
    }

    /// The belief as a binary mixture of priors `i / 100` (zero-mass points
    /// dropped).
    pub fn to_mixture(&self) -> MixtureBelief {
        let pairs: Vec<(f64, f64)> = self
            .mass
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, m)| (i as f64 / 100.0, *m))
            .collect();
        MixtureBelief::from_success_probs(&pairs).expect("validated belief is a valid mixture")
    }
}

fn check_point(point: u32) -> Result<usize> {
    if point <= 100 {
        Ok(point as usize)
    } else {
        Err(ElicitationError::PointOutOfRange(point))
    }
}

fn check_unit(p: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(ElicitationError::InvalidProbability(p))
    }
}

/// Inclusive half-width of the payment window, in percentage points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportWindow {
    pub half_width: u8,
}

impl Default for ReportWindow {
    fn default() -> Self {
        Self { half_width: 3 }
    }
}

impl ReportWindow {
    pub fn contains(self, report: f64, truth: f64) -> bool {
        (report - truth).abs() <= f64::from(self.half_width) + WINDOW_SLACK
    }
}

/// Prize paid by the bet and by the objective lottery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdmConfig {
    pub prize: f64,
}

impl Default for BdmConfig {
    fn default() -> Self {
        Self { prize: 3.0 }
    }
}

/// A belief report and the confidence that goes with it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    /// Reported point, percentage points.
    pub report: u8,
    /// Probability that the report is inside the window.
    pub q_star: f64,
}

impl ConfidenceReport {
    /// Confidence as elicited: an integer percentage.
    pub fn confidence_pp(&self) -> u8 {
        math::round(self.q_star * 100.0) as u8
    }
}

/// Mass of `belief` on `[point - w, point + w]`, clipped to `0..=100`.
pub fn window_mass(belief: &SecondOrderBelief, point: u8, window: ReportWindow) -> Result<f64> {
    let p = check_point(u32::from(point))?;
    let w = usize::from(window.half_width);
    let lo = p.saturating_sub(w);
    let hi = (p + w).min(GRID_POINTS - 1);
    Ok(belief.mass[lo..=hi].iter().sum())
}

/// Report with the largest window mass; ties go to the smallest point.
pub fn optimal_point_report(belief: &SecondOrderBelief, window: ReportWindow) -> ConfidenceReport {
    let mut best = ConfidenceReport { report: 0, q_star: f64::NEG_INFINITY };
    for point in 0..=100u8 {
        let mass = window_mass(belief, point, window).expect("point in range");
        if mass > best.q_star {
            best = ConfidenceReport { report: point, q_star: mass };
        }
    }
    best
}

/// Like [`optimal_point_report`], but among maximisers picks the one nearest
/// `anchor` (percentage points), then the smallest. Every maximiser earns the
/// same expected payoff, so this is equally optimal; simulated agents use it
/// with their mean belief so that a point-mass belief is reported as itself.
pub fn optimal_point_report_near(belief: &SecondOrderBelief, window: ReportWindow, anchor: f64) -> ConfidenceReport {
    let q_star = optimal_point_report(belief, window).q_star;
    let mut best: Option<(f64, u8)> = None;
    for point in 0..=100u8 {
        let mass = window_mass(belief, point, window).expect("point in range");
        if mass == q_star {
            let dist = (f64::from(point) - anchor).abs();
            if best.is_none_or(|(d, _)| dist < d) {
                best = Some((dist, point));
            }
        }
    }
    ConfidenceReport { report: best.expect("the maximum is attained").1, q_star }
}

/// Expected payoff of reporting confidence `q` when the bet wins with
/// probability `q_star`: `y (q q* + 1/2 - q^2/2)`.
pub fn bdm_expected_payoff(q: f64, q_star: f64, config: BdmConfig) -> Result<f64> {
    let (q, q_star) = (check_unit(q)?, check_unit(q_star)?);
    Ok(config.prize * (q * q_star + 0.5 - q * q / 2.0))
}

/// The payoff-maximising confidence report is the subjective hit
/// probability itself.
pub fn optimal_confidence(q_star: f64) -> Result<f64> {
    check_unit(q_star)
}

/// Realised BDM payoff.
///
/// If `x_draw <= q_report` the bet pays the prize when the guess was
/// correct. Otherwise the lottery pays the prize when `lottery_roll <
/// x_draw`; the roll must be supplied on that branch.
pub fn resolve_bdm(
    q_report: f64,
    x_draw: f64,
    guess_correct: bool,
    lottery_roll: Option<f64>,
    config: BdmConfig,
) -> Result<f64> {
    let (q, x) = (check_unit(q_report)?, check_unit(x_draw)?);
    if x <= q {
        return Ok(if guess_correct { config.prize } else { 0.0 });
    }
    let roll = check_unit(lottery_roll.ok_or(ElicitationError::MissingLotteryDraw)?)?;
    Ok(if roll < x { config.prize } else { 0.0 })
}

/// Prize if `report` is within the window of `truth` (both in percentage
/// points), else zero.
pub fn score_report(report: f64, truth: f64, window: ReportWindow, config: BdmConfig) -> f64 {
    if window.contains(report, truth) {
        config.prize
    } else {
        0.0
    }
}

/// The four paid report types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaymentKind {
    Prior,
    PriorConfidence,
    Update,
    UpdateConfidence,
}

impl PaymentKind {
    pub const ALL: [PaymentKind; 4] = [
        PaymentKind::Prior,
        PaymentKind::PriorConfidence,
        PaymentKind::Update,
        PaymentKind::UpdateConfidence,
    ];
}

/// One realised payment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentDraw {
    pub kind: PaymentKind,
    pub treatment: Treatment,
    pub task_id: u32,
    pub actual_prior: u8,
    pub success: bool,
    pub signal: Signal,
    /// Times the degenerate task came up with a negative signal and the
    /// draw was repeated.
    pub redraws: u32,
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payments {
    pub draws: Vec<PaymentDraw>,
}

impl Payments {
    pub fn total(&self) -> f64 {
        self.draws.iter().map(|d| d.payoff).sum()
    }
}

/// Source of the uniform numbers behind a payment draw.
pub trait PaymentRandomness {
    /// Uniform index in `0..n`.
    fn index(&mut self, n: usize) -> usize;
    /// Uniform number in `[0, 1)`.
    fn unit(&mut self) -> f64;
}

/// Adapts any [`Rng`] to [`PaymentRandomness`].
pub struct RngDraws<R>(pub R);

impl<R: Rng> PaymentRandomness for RngDraws<R> {
    fn index(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    fn unit(&mut self) -> f64 {
        self.0.random::<f64>()
    }
}

#[derive(Debug, Clone)]
struct PaidTask {
    treatment: Treatment,
    task_id: u32,
    actual_prior: u8,
    accuracy: u8,
    reported_prior: f64,
    prior_confidence: f64,
    /// `(reported_update, update_confidence)` per signal index.
    updates: [Option<(f64, f64)>; 2],
}

fn collect_tasks(records: &[ResponseRecord]) -> Result<Vec<PaidTask>> {
    let mut tasks: BTreeMap<(Treatment, u32), PaidTask> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_main()) {
        let task = tasks.entry((r.treatment, r.task_id)).or_insert_with(|| PaidTask {
            treatment: r.treatment,
            task_id: r.task_id,
            actual_prior: r.actual_prior,
            accuracy: r.signal_accuracy,
            reported_prior: r.reported_prior,
            prior_confidence: r.prior_confidence,
            updates: [None, None],
        });
        task.updates[r.signal.index()] = Some((r.reported_update, r.update_confidence));
    }
    if tasks.is_empty() {
        return Err(ElicitationError::IncompleteSession("no paid tasks".into()));
    }
    for t in tasks.values() {
        let missing = t.updates[0].is_none() || (t.actual_prior != 0 && t.updates[1].is_none());
        if missing {
            return Err(ElicitationError::IncompleteSession(alloc::format!(
                "task {} ({}) is missing an update branch",
                t.task_id,
                t.treatment
            )));
        }
    }
    Ok(tasks.into_values().collect())
}

/// Bayesian posterior, in percentage points, from the actual prior.
pub fn update_truth(actual_prior: u8, accuracy: u8, signal: Signal) -> f64 {
    let model = SignalModel::symmetric(f64::from(accuracy) / 100.0).expect("validated accuracy");
    100.0 * bayes_posterior(f64::from(actual_prior) / 100.0, signal, &model).expect("symmetric model")
}

/// Draws the four payments with explicit randomness.
///
/// Each payment independently picks a task, then the project type from the
/// task's prior and the signal from its accuracy. A negative signal on the
/// degenerate (all-failure) task is thrown away and the whole draw repeats.
pub fn payment_draw_with(
    records: &[ResponseRecord],
    rng: &mut impl PaymentRandomness,
    window: ReportWindow,
    config: BdmConfig,
) -> Result<Payments> {
    let tasks = collect_tasks(records)?;
    let mut draws = Vec::with_capacity(4);
    for kind in PaymentKind::ALL {
        let mut redraws = 0;
        let (task, success, signal) = loop {
            let task = &tasks[rng.index(tasks.len())];
            let success = rng.unit() < f64::from(task.actual_prior) / 100.0;
            let accurate = rng.unit() < f64::from(task.accuracy) / 100.0;
            let signal = if success == accurate { Signal::Positive } else { Signal::Negative };
            if task.actual_prior == 0 && signal == Signal::Negative {
                redraws += 1;
                if redraws > MAX_REDRAWS {
                    return Err(ElicitationError::RedrawLimit);
                }
                continue;
            }
            break (task, success, signal);
        };
        let truth_prior = f64::from(task.actual_prior);
        let (update, update_conf) = task.updates[signal.index()].expect("checked in collect_tasks");
        let truth_update = update_truth(task.actual_prior, task.accuracy, signal);
        let payoff = match kind {
            PaymentKind::Prior => score_report(task.reported_prior, truth_prior, window, config),
            PaymentKind::Update => score_report(update, truth_update, window, config),
            PaymentKind::PriorConfidence | PaymentKind::UpdateConfidence => {
                let (report, truth, confidence) = if kind == PaymentKind::PriorConfidence {
                    (task.reported_prior, truth_prior, task.prior_confidence)
                } else {
                    (update, truth_update, update_conf)
                };
                let q = (confidence / 100.0).clamp(0.0, 1.0);
                let x = rng.unit();
                let roll = if x > q { Some(rng.unit()) } else { None };
                resolve_bdm(q, x, window.contains(report, truth), roll, config)?
            }
        };
        draws.push(PaymentDraw {
            kind,
            treatment: task.treatment,
            task_id: task.task_id,
            actual_prior: task.actual_prior,
            success,
            signal,
            redraws,
            payoff,
        });
    }
    Ok(Payments { draws })
}

/// Seeded payment draw for one subject's rows.
pub fn payment_draw(records: &[ResponseRecord], seed: u64) -> Result<Payments> {
    let mut rng = RngDraws(ChaCha8Rng::seed_from_u64(seed));
    payment_draw_with(records, &mut rng, ReportWindow::default(), BdmConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use approx::assert_abs_diff_eq;

    const W: ReportWindow = ReportWindow { half_width: 3 };
    const Y: BdmConfig = BdmConfig { prize: 3.0 };

    #[test]
    fn window_mass_examples() {
        let at50 = SecondOrderBelief::point_mass(50).unwrap();
        assert_eq!(window_mass(&at50, 50, W).unwrap(), 1.0);
        assert_eq!(window_mass(&at50, 54, W).unwrap(), 0.0);
        assert_eq!(window_mass(&at50, 53, W).unwrap(), 1.0);
        let u = SecondOrderBelief::uniform(40, 44).unwrap();
        assert_abs_diff_eq!(window_mass(&u, 42, W).unwrap(), 1.0, epsilon = 1e-15);
        let edge = SecondOrderBelief::uniform(0, 1).unwrap();
        assert_abs_diff_eq!(window_mass(&edge, 0, W).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(window_mass(&at50, 101, W), Err(ElicitationError::PointOutOfRange(101)));
    }

    #[test]
    fn optimal_report_examples() {
        let black = SecondOrderBelief::point_mass(0).unwrap();
        let r = optimal_point_report(&black, W);
        assert_eq!((r.report, r.q_star), (0, 1.0));
        assert_eq!(r.confidence_pp(), 100);

        // Window mass is 1 at 41, 42 and 43; the smallest wins.
        let u = SecondOrderBelief::uniform(40, 44).unwrap();
        let r = optimal_point_report(&u, W);
        assert_eq!(r.report, 41);
        assert_abs_diff_eq!(r.q_star, 1.0, epsilon = 1e-15);

        // A point mass fills seven windows; the smallest index wins, while
        // the anchored variant returns the point itself.
        let at70 = SecondOrderBelief::point_mass(70).unwrap();
        let r = optimal_point_report(&at70, W);
        assert_eq!((r.report, r.q_star), (67, 1.0));
        let r = optimal_point_report_near(&at70, W, 100.0 * at70.mean());
        assert_eq!((r.report, r.q_star), (70, 1.0));
        let r = optimal_point_report_near(&u, W, 100.0 * u.mean());
        assert_eq!(r.report, 42);
    }

    #[test]
    fn optimal_report_matches_exhaustive_search() {
        // Brute force over every report with an independently coded window.
        let mut weights = vec![0.0; GRID_POINTS];
        for (i, w) in weights.iter_mut().enumerate() {
            *w = ((i * 37 + 11) % 23) as f64 + if i > 60 { 5.0 } else { 0.0 };
        }
        let b = SecondOrderBelief::from_weights(weights).unwrap();
        let mass = b.mass();
        let mut best = (0usize, -1.0);
        for p in 0..=100i32 {
            let m: f64 = (0..=100i32).filter(|j| (j - p).abs() <= 3).map(|j| mass[j as usize]).sum();
            if m > best.1 + 1e-12 {
                best = (p as usize, m);
            }
        }
        let r = optimal_point_report(&b, W);
        assert_eq!(usize::from(r.report), best.0);
        assert_abs_diff_eq!(r.q_star, best.1, epsilon = 1e-12);
    }

    #[test]
    fn belief_validation() {
        assert!(SecondOrderBelief::new(vec![0.5; 2]).is_err());
        assert!(SecondOrderBelief::from_weights(vec![0.0; GRID_POINTS]).is_err());
        let mut neg = vec![0.0; GRID_POINTS];
        neg[0] = 1.5;
        neg[1] = -0.5;
        assert!(SecondOrderBelief::new(neg).is_err());
    }

    #[test]
    fn bdm_payoff_examples() {
        // 3 * (0.49 + 0.5 - 0.245)
        assert_abs_diff_eq!(bdm_expected_payoff(0.7, 0.7, Y).unwrap(), 2.235, epsilon = 1e-12);
        assert_abs_diff_eq!(bdm_expected_payoff(1.0, 1.0, Y).unwrap(), 3.0, epsilon = 1e-15);
        for &qs in &[0.0, 0.3, 1.0] {
            assert_abs_diff_eq!(bdm_expected_payoff(0.0, qs, Y).unwrap(), 1.5, epsilon = 1e-15);
        }
        assert!(bdm_expected_payoff(1.2, 0.5, Y).is_err());
    }

    #[test]
    fn optimal_confidence_agrees_with_grid_search() {
        for &qs in &[0.0, 0.33, 0.7, 1.0] {
            let analytic = optimal_confidence(qs).unwrap();
            let grid = (0..=1000)
                .map(|i| i as f64 / 1000.0)
                .max_by(|a, b| {
                    bdm_expected_payoff(*a, qs, Y).unwrap().total_cmp(&bdm_expected_payoff(*b, qs, Y).unwrap())
                })
                .unwrap();
            assert!((grid - analytic).abs() <= 0.001, "q*={qs}: grid {grid}");
        }
    }

    #[test]
    fn resolve_bdm_examples() {
        assert_eq!(resolve_bdm(0.7, 0.5, true, None, Y).unwrap(), 3.0);
        assert_eq!(resolve_bdm(0.7, 0.5, false, None, Y).unwrap(), 0.0);
        assert_eq!(resolve_bdm(0.7, 0.9, false, Some(0.85), Y).unwrap(), 3.0);
        assert_eq!(resolve_bdm(0.7, 0.9, true, Some(0.95), Y).unwrap(), 0.0);
        assert_eq!(resolve_bdm(0.7, 0.7, false, None, Y).unwrap(), 0.0);
        assert_eq!(resolve_bdm(0.7, 0.9, true, None, Y), Err(ElicitationError::MissingLotteryDraw));
    }

    #[test]
    fn score_report_examples() {
        assert_eq!(score_report(47.0, 50.0, W, Y), 3.0);
        assert_eq!(score_report(46.0, 50.0, W, Y), 0.0);
        let model = SignalModel::symmetric(0.8).unwrap();
        let truth = 100.0 * bayes_posterior(0.7, Signal::Positive, &model).unwrap();
        assert_eq!(score_report(90.0, truth, W, Y), 3.0);
        assert_eq!(score_report(truth - 3.0, truth, W, Y), 3.0);
        for a in 0..=100 {
            for b in [0, 20, 47, 50, 53, 100] {
                assert_eq!(
                    score_report(f64::from(a), f64::from(b), W, Y),
                    score_report(f64::from(b), f64::from(a), W, Y)
                );
            }
        }
    }

    fn row(task_id: u32, treatment: Treatment, actual: u8, signal: Signal, update: f64) -> ResponseRecord {
        ResponseRecord {
            subject_id: "s".to_string(),
            treatment,
            task_id,
            actual_prior: actual,
            reported_prior: f64::from(actual),
            prior_confidence: 90.0,
            signal_accuracy: 80,
            signal,
            reported_update: update,
            update_confidence: 80.0,
            is_practice: false,
            is_comprehension: false,
        }
    }

    fn bayesian_session(treatment: Treatment) -> Vec<ResponseRecord> {
        let mut rows = Vec::new();
        for (i, &prior) in [0u8, 20, 40, 50, 70, 90].iter().enumerate() {
            for signal in Signal::ALL {
                if prior == 0 && signal == Signal::Negative {
                    continue;
                }
                rows.push(row(i as u32 + 1, treatment, prior, signal, update_truth(prior, 80, signal)));
            }
        }
        rows
    }

    #[test]
    fn payment_draw_is_deterministic() {
        let rows = bayesian_session(Treatment::High);
        let a = payment_draw(&rows, 42).unwrap();
        let b = payment_draw(&rows, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws.len(), 4);
        let kinds: Vec<_> = a.draws.iter().map(|d| d.kind).collect();
        assert_eq!(kinds, PaymentKind::ALL);
    }

    #[test]
    fn bayesian_responses_always_earn_the_update_prize() {
        let rows = bayesian_session(Treatment::High);
        for seed in 0..200 {
            let p = payment_draw(&rows, seed).unwrap();
            assert_eq!(p.draws[0].payoff, 3.0);
            assert_eq!(p.draws[2].payoff, 3.0);
            for d in &p.draws {
                assert!(d.payoff == 0.0 || d.payoff == 3.0);
            }
        }
    }

    /// Replays a fixed script of uniforms.
    struct Scripted {
        indices: Vec<usize>,
        units: Vec<f64>,
    }

    impl PaymentRandomness for Scripted {
        fn index(&mut self, _n: usize) -> usize {
            self.indices.remove(0)
        }
        fn unit(&mut self) -> f64 {
            self.units.remove(0)
        }
    }

    #[test]
    fn degenerate_negative_signal_forces_a_redraw() {
        let rows = bayesian_session(Treatment::Low);
        // Task index 0 is the degenerate task (prior 0). Project is a
        // failure (0.5 >= 0), test accurate (0.1 < 0.8) -> negative: redraw.
        // Second attempt: task index 4 (prior 70), success, accurate -> positive.
        let mut indices = vec![0, 4];
        let mut units = vec![0.5, 0.1, 0.2, 0.1];
        // Remaining three payments: task 3, failure, accurate -> negative.
        indices.extend([3; 3]);
        for _ in 0..3 {
            units.extend_from_slice(&[0.9, 0.1, 0.05]);
        }
        let mut rng = Scripted { indices, units };
        let p = payment_draw_with(&rows, &mut rng, W, Y).unwrap();
        assert_eq!(p.draws[0].redraws, 1);
        assert_eq!(p.draws[0].actual_prior, 70);
        assert_eq!(p.draws[0].signal, Signal::Positive);
        assert_eq!(p.draws[1].redraws, 0);
        assert_eq!(p.draws[1].signal, Signal::Negative);
        // Confidence 90 and x = 0.05: the bet is used and the prior was exact.
        assert_eq!(p.draws[1].payoff, 3.0);
    }

    #[test]
    fn incomplete_sessions_are_rejected() {
        assert!(matches!(payment_draw(&[], 1), Err(ElicitationError::IncompleteSession(_))));
        let mut rows = bayesian_session(Treatment::Low);
        rows.retain(|r| !(r.actual_prior == 50 && r.signal == Signal::Negative));
        assert!(matches!(payment_draw(&rows, 1), Err(ElicitationError::IncompleteSession(_))));
    }
}
