//! Synthetic subjects.
//!
//! A simulated subject sees each grid through a noisy perception channel,
//! holds a discretised second-order belief about the prior, reports the
//! window-optimal point and its window mass, and updates with a chosen rule
//! for both signal branches. Datasets come out in the same record format as
//! live sessions.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{
    distorted_mixture_update, distorted_posterior, fbu_update, grether_posterior, mixture_bayes_update,
    mlu_update, BeliefError, Distortion, GretherParams, SignalModel,
};
use crate::econometrics::{grether_estimate, EconError, Estimate, GretherEstimate, GretherOptions};
use crate::elicitation::{
    optimal_point_report_near, BdmConfig, ElicitationError, ReportWindow, SecondOrderBelief, GRID_POINTS,
};
use crate::math;
use crate::record::{ResponseRecord, Signal, Treatment};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("white count {0} is outside 0..=100")]
    WhiteCount(u32),
    #[error("invalid agent: {0}")]
    Agent(String),
    #[error("invalid design: {0}")]
    Design(String),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Elicitation(#[from] ElicitationError),
    #[error(transparent)]
    Estimation(#[from] EconError),
}

pub type Result<T> = core::result::Result<T, SimulationError>;

/// A 10x10 grid of projects; `true` cells are successes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub cells: Vec<bool>,
}

impl Grid {
    pub const SIDE: usize = 10;

    pub fn white_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Rows of the 10x10 layout.
    pub fn rows(&self) -> impl Iterator<Item = &[bool]> {
        self.cells.chunks(Self::SIDE)
    }
}

/// Grid with `white_count` successes placed uniformly at random.
pub fn make_grid(white_count: u32, rng: &mut impl Rng) -> Result<Grid> {
    if white_count > 100 {
        return Err(SimulationError::WhiteCount(white_count));
    }
    let mut cells: Vec<bool> = (0..100).map(|i| i < white_count).collect();
    cells.shuffle(rng);
    Ok(Grid { cells })
}

/// Task structure shared by simulated and live sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentDesign {
    /// White counts shown in each treatment block, before shuffling.
    pub priors: Vec<u8>,
    pub low_display_ms: u32,
    pub high_display_ms: u32,
    /// Earliest point at which a High-treatment grid may be dismissed.
    pub high_min_view_ms: u32,
    pub accuracies: [u8; 2],
    pub window: ReportWindow,
    pub bdm: BdmConfig,
}

impl Default for ExperimentDesign {
    fn default() -> Self {
        Self {
            priors: vec![0, 20, 40, 50, 70, 90, 20, 40, 50, 70, 90],
            low_display_ms: 250,
            high_display_ms: 30_000,
            high_min_view_ms: 5_000,
            accuracies: [60, 80],
            window: ReportWindow::default(),
            bdm: BdmConfig::default(),
        }
    }
}

/// One task as presented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    /// Position in the session, starting at 1.
    pub task_id: u32,
    pub treatment: Treatment,
    pub actual_prior: u8,
}

impl ExperimentDesign {
    pub fn validate(&self) -> Result<()> {
        if self.priors.is_empty() || self.priors.iter().any(|p| *p > 100) {
            return Err(SimulationError::Design("priors must be nonempty and within 0..=100".into()));
        }
        if self.accuracies.iter().any(|a| !(51..=100).contains(a)) {
            return Err(SimulationError::Design("accuracies must lie in 51..=100".into()));
        }
        Ok(())
    }

    pub fn tasks_per_treatment(&self) -> usize {
        self.priors.len()
    }

    /// Display time of the grid in a treatment.
    pub fn display_ms(&self, treatment: Treatment) -> u32 {
        match treatment {
            Treatment::Low => self.low_display_ms,
            Treatment::High => self.high_display_ms,
        }
    }

    /// The Low block followed by the High block, each in random order.
    pub fn task_sequence(&self, rng: &mut impl Rng) -> Vec<TaskInstance> {
        let mut tasks = Vec::with_capacity(2 * self.priors.len());
        for treatment in Treatment::ALL {
            let mut block = self.priors.clone();
            block.shuffle(rng);
            for prior in block {
                tasks.push(TaskInstance { task_id: tasks.len() as u32 + 1, treatment, actual_prior: prior });
            }
        }
        tasks
    }
}

/// How the agent turns a signal into a posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum UpdatingRule {
    /// Bayes' rule on the average prior.
    BayesAverage,
    Grether(GretherParams),
    /// Bayes on every component, weights held fixed.
    Fbu,
    /// Bayes on the most likely component.
    Mlu,
    Distorted { distortion: Distortion },
}

/// Rounding applied to simulated reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportPolicy {
    /// Whole percentages, as typed by a human subject.
    #[default]
    Integer,
    /// Exact reals; used for noiseless round-trip checks.
    Exact,
}

impl ReportPolicy {
    fn apply(self, pp: f64) -> f64 {
        match self {
            ReportPolicy::Integer => math::round(pp),
            ReportPolicy::Exact => pp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub low_rule: UpdatingRule,
    pub high_rule: UpdatingRule,
    /// Standard deviation (pp) of the perceived white count.
    pub perception_sigma_low: f64,
    pub perception_sigma_high: f64,
    /// Spread (pp) of the second-order belief around the perceived count.
    pub tau_low: f64,
    pub tau_high: f64,
    /// Standard deviation of classical measurement error added to the
    /// log odds of the reported prior; the agent still updates on its own
    /// belief. Reports of exactly 0 or 100 are left alone.
    pub report_noise_sd: f64,
    pub policy: ReportPolicy,
    /// Update the whole mixture instead of its average (Bayes and distorted
    /// rules only).
    pub mixture_updating: bool,
}

impl Default for AgentSpec {
    fn default() -> Self {
        Self {
            low_rule: UpdatingRule::BayesAverage,
            high_rule: UpdatingRule::BayesAverage,
            perception_sigma_low: 8.0,
            perception_sigma_high: 0.0,
            tau_low: 8.0,
            tau_high: 0.0,
            report_noise_sd: 0.0,
            policy: ReportPolicy::Integer,
            mixture_updating: false,
        }
    }
}

impl AgentSpec {
    /// Same rule in both treatments.
    pub fn with_rule(rule: UpdatingRule) -> Self {
        Self { low_rule: rule.clone(), high_rule: rule, ..Self::default() }
    }

    /// Perfect perception and exact reports.
    pub fn noiseless(self) -> Self {
        Self {
            perception_sigma_low: 0.0,
            perception_sigma_high: 0.0,
            tau_low: 0.0,
            tau_high: 0.0,
            report_noise_sd: 0.0,
            policy: ReportPolicy::Exact,
            ..self
        }
    }

    pub fn rule(&self, treatment: Treatment) -> &UpdatingRule {
        match treatment {
            Treatment::Low => &self.low_rule,
            Treatment::High => &self.high_rule,
        }
    }

    fn perception(&self, treatment: Treatment) -> (f64, f64) {
        match treatment {
            Treatment::Low => (self.perception_sigma_low, self.tau_low),
            Treatment::High => (self.perception_sigma_high, self.tau_high),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spreads = [
            self.perception_sigma_low,
            self.perception_sigma_high,
            self.tau_low,
            self.tau_high,
            self.report_noise_sd,
        ];
        if spreads.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(SimulationError::Agent("noise parameters must be finite and nonnegative".into()));
        }
        for rule in [&self.low_rule, &self.high_rule] {
            if let UpdatingRule::Grether(p) = rule {
                GretherParams::new(p.alpha, p.beta)?;
            }
        }
        Ok(())
    }
}

/// Perceived second-order belief about a grid.
///
/// The perceived centre is the true count plus Normal noise, rounded and
/// clamped to `0..=100`; the belief is a Normal shape around it with spread
/// `tau`, discretised and renormalised on `0..=100` (a point mass when
/// `tau = 0`).
pub fn perceive_grid(
    white_count: u8,
    treatment: Treatment,
    agent: &AgentSpec,
    rng: &mut impl Rng,
) -> Result<SecondOrderBelief> {
    if white_count > 100 {
        return Err(SimulationError::WhiteCount(u32::from(white_count)));
    }
    let (sigma, tau) = agent.perception(treatment);
    let noise = if sigma > 0.0 { sigma * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
    let centre = math::round(f64::from(white_count) + noise).clamp(0.0, 100.0);
    Ok(discretised_normal(centre, tau)?)
}

fn discretised_normal(centre: f64, tau: f64) -> core::result::Result<SecondOrderBelief, ElicitationError> {
    if tau == 0.0 {
        return SecondOrderBelief::point_mass(centre as u8);
    }
    let weights = (0..GRID_POINTS)
        .map(|i| {
            let z = (i as f64 - centre) / tau;
            math::exp(-0.5 * z * z)
        })
        .collect();
    SecondOrderBelief::from_weights(weights)
}

fn component_posterior(rule: &UpdatingRule, prior: f64, signal: Signal, model: &SignalModel) -> Result<f64> {
    Ok(match rule {
        UpdatingRule::Grether(params) => match grether_posterior(prior, signal, model, *params) {
            Err(BeliefError::UndefinedForm) => prior,
            other => other?,
        },
        UpdatingRule::Distorted { distortion } => distorted_posterior(prior, signal, model, distortion)?,
        _ => distorted_posterior(prior, signal, model, &Distortion::Identity)?,
    })
}

/// The agent's posterior success probability after `signal`.
pub fn agent_posterior(
    agent: &AgentSpec,
    treatment: Treatment,
    belief: &SecondOrderBelief,
    signal: Signal,
    model: &SignalModel,
) -> Result<f64> {
    let rule = agent.rule(treatment);
    let mix = belief.to_mixture();
    let s = signal.index();
    Ok(match rule {
        UpdatingRule::BayesAverage if agent.mixture_updating => mixture_bayes_update(&mix, s, model)?.average_success(),
        UpdatingRule::Distorted { distortion } if agent.mixture_updating => {
            distorted_mixture_update(&mix, s, model, distortion)?.average_success()
        }
        UpdatingRule::Fbu => fbu_update(&mix, s, model)?.average_success(),
        UpdatingRule::Mlu => mlu_update(&mix, s, model)?[0],
        _ => component_posterior(rule, belief.mean(), signal, model)?,
    })
}

/// Probability, under the agent's reweighted second-order belief, that the
/// posterior lies within the window of `report`.
fn update_confidence(
    rule: &UpdatingRule,
    belief: &SecondOrderBelief,
    signal: Signal,
    model: &SignalModel,
    report: f64,
    window: ReportWindow,
) -> Result<f64> {
    let s = signal.index();
    let mut inside = 0.0;
    let mut total = 0.0;
    for (i, &mass) in belief.mass().iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let prior = i as f64 / 100.0;
        let weight = mass * (prior * model.likelihood(s, 0) + (1.0 - prior) * model.likelihood(s, 1));
        total += weight;
        if window.contains(report, 100.0 * component_posterior(rule, prior, signal, model)?) {
            inside += weight;
        }
    }
    Ok(if total > 0.0 { inside / total } else { 0.0 })
}

/// All records of one subject: every task of both treatments, with the
/// negative branch skipped on the all-failure grid.
pub fn simulate_subject(
    subject_id: &str,
    agent: &AgentSpec,
    design: &ExperimentDesign,
    accuracy: u8,
    rng: &mut impl Rng,
) -> Result<Vec<ResponseRecord>> {
    agent.validate()?;
    design.validate()?;
    let model = SignalModel::symmetric(f64::from(accuracy) / 100.0)?;
    let mut records = Vec::new();
    for task in design.task_sequence(rng) {
        let belief = perceive_grid(task.actual_prior, task.treatment, agent, rng)?;
        let report = optimal_point_report_near(&belief, design.window, 100.0 * belief.mean());
        let mut reported_prior = f64::from(report.report);
        if agent.report_noise_sd > 0.0 && reported_prior > 0.0 && reported_prior < 100.0 {
            let noise = agent.report_noise_sd * rng.sample::<f64, _>(StandardNormal);
            let noisy = 100.0 * math::logistic(math::logit(reported_prior / 100.0) + noise);
            reported_prior = agent.policy.apply(noisy).clamp(0.0, 100.0);
        }
        let prior_confidence = agent.policy.apply(100.0 * report.q_star);
        for signal in Signal::ALL {
            if task.actual_prior == 0 && signal == Signal::Negative {
                continue;
            }
            let posterior = agent_posterior(agent, task.treatment, &belief, signal, &model)?;
            let reported_update = agent.policy.apply(100.0 * posterior).clamp(0.0, 100.0);
            let conf = update_confidence(agent.rule(task.treatment), &belief, signal, &model, reported_update, design.window)?;
            records.push(ResponseRecord {
                subject_id: subject_id.into(),
                treatment: task.treatment,
                task_id: task.task_id,
                actual_prior: task.actual_prior,
                reported_prior,
                prior_confidence,
                signal_accuracy: accuracy,
                signal,
                reported_update,
                update_confidence: agent.policy.apply(100.0 * conf),
                is_practice: false,
                is_comprehension: false,
            });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationShare {
    pub agent: AgentSpec,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_subjects: usize,
    pub population: Vec<PopulationShare>,
    pub design: ExperimentDesign,
    pub seed: u64,
    /// Subjects assigned 60% accuracy; `n_subjects / 2` when unset.
    pub n_low_accuracy: Option<usize>,
}

impl SimulationConfig {
    pub fn single(agent: AgentSpec, n_subjects: usize, seed: u64) -> Self {
        Self {
            n_subjects,
            population: vec![PopulationShare { agent, weight: 1.0 }],
            design: ExperimentDesign::default(),
            seed,
            n_low_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub subject_id: String,
    pub accuracy: u8,
    /// Index into the population.
    pub agent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDataset {
    pub subjects: Vec<SubjectInfo>,
    pub records: Vec<ResponseRecord>,
}

/// Independent stream for subject `index`; stream 0 is reserved for the
/// accuracy assignment.
pub fn subject_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

pub fn subject_id(index: usize) -> String {
    format!("S{:03}", index + 1)
}

/// Simulates a whole experiment. Accuracy levels are assigned by a seeded
/// permutation and each subject runs on its own random stream, so results
/// do not depend on the order in which subjects are generated.
pub fn simulate_experiment(config: &SimulationConfig) -> Result<SimulatedDataset> {
    if config.n_subjects == 0 {
        return Err(SimulationError::Design("need at least one subject".into()));
    }
    let total_weight: f64 = config.population.iter().map(|p| p.weight).sum();
    if config.population.is_empty() || config.population.iter().any(|p| p.weight.is_nan() || p.weight < 0.0) || total_weight.is_nan() || total_weight <= 0.0 {
        return Err(SimulationError::Agent("population weights must be nonnegative with a positive sum".into()));
    }
    let n_low = config.n_low_accuracy.unwrap_or(config.n_subjects / 2);
    if n_low > config.n_subjects {
        return Err(SimulationError::Design(format!("{n_low} low-accuracy subjects out of {}", config.n_subjects)));
    }
    let [low_acc, high_acc] = config.design.accuracies;
    let mut accuracies: Vec<u8> = (0..config.n_subjects).map(|i| if i < n_low { low_acc } else { high_acc }).collect();
    accuracies.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));

    let mut subjects = Vec::with_capacity(config.n_subjects);
    let mut records = Vec::new();
    for (index, &accuracy) in accuracies.iter().enumerate() {
        let mut rng = subject_rng(config.seed, index);
        let mut pick = rng.random::<f64>() * total_weight;
        let mut agent = config.population.len() - 1;
        for (j, share) in config.population.iter().enumerate() {
            if pick < share.weight {
                agent = j;
                break;
            }
            pick -= share.weight;
        }
        let id = subject_id(index);
        records.extend(simulate_subject(&id, &config.population[agent].agent, &config.design, accuracy, &mut rng)?);
        subjects.push(SubjectInfo { subject_id: id, accuracy, agent });
    }
    Ok(SimulatedDataset { subjects, records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub low: GretherParams,
    pub high: GretherParams,
    /// Noise settings; the rules are replaced by the Grether parameters.
    pub agent: AgentSpec,
    pub n_subjects: usize,
    pub replications: usize,
    pub options: GretherOptions,
    pub seed: u64,
}

/// Monte Carlo summary for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterRecovery {
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mean_abs_error: f64,
    pub mean_se: f64,
    /// Share of replications whose 95% normal interval covers the truth.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub replications: usize,
    pub alpha_low: ParameterRecovery,
    pub beta_low: ParameterRecovery,
    pub alpha_high: ParameterRecovery,
    pub beta_high: ParameterRecovery,
    pub alpha_gap: ParameterRecovery,
    pub beta_gap: ParameterRecovery,
    pub mean_first_stage_f: Option<f64>,
}

fn summarise(truth: f64, estimates: &[Estimate]) -> ParameterRecovery {
    let n = estimates.len() as f64;
    let values: Vec<f64> = estimates.iter().map(|e| e.estimate).collect();
    let errors: Vec<f64> = values.iter().map(|v| (v - truth).abs()).collect();
    let ses: Vec<f64> = estimates.iter().map(|e| e.se).collect();
    let mean_estimate = math::stable_mean(&values).unwrap_or(f64::NAN);
    let covered = estimates.iter().filter(|e| (e.estimate - truth).abs() <= 1.959_963_984_540_054 * e.se).count();
    ParameterRecovery {
        truth,
        mean_estimate,
        bias: mean_estimate - truth,
        mean_abs_error: math::stable_mean(&errors).unwrap_or(f64::NAN),
        mean_se: math::stable_mean(&ses).unwrap_or(f64::NAN),
        coverage: covered as f64 / n,
    }
}

/// Simulates Grether agents repeatedly and re-estimates their parameters.
/// Replication `r` uses master seed `seed + r`, so two configurations that
/// differ only in estimation options see identical datasets.
pub fn parameter_recovery(config: &RecoveryConfig) -> Result<RecoveryReport> {
    let agent = AgentSpec {
        low_rule: UpdatingRule::Grether(config.low),
        high_rule: UpdatingRule::Grether(config.high),
        ..config.agent.clone()
    };
    let mut fits: Vec<GretherEstimate> = Vec::with_capacity(config.replications);
    for r in 0..config.replications {
        let sim = SimulationConfig::single(agent.clone(), config.n_subjects, config.seed.wrapping_add(r as u64));
        let data = simulate_experiment(&sim)?;
        fits.push(grether_estimate(&data.records, config.options)?);
    }
    let pick = |f: fn(&GretherEstimate) -> Estimate| fits.iter().map(f).collect::<Vec<_>>();
    let first_stage: Vec<f64> = fits
        .iter()
        .filter_map(|f| f.fit.first_stage_f.as_ref())
        .flat_map(|v| v.iter().copied())
        .collect();
    Ok(RecoveryReport {
        replications: config.replications,
        alpha_low: summarise(config.low.alpha, &pick(|f| f.alpha_low)),
        beta_low: summarise(config.low.beta, &pick(|f| f.beta_low)),
        alpha_high: summarise(config.high.alpha, &pick(|f| f.alpha_high)),
        beta_high: summarise(config.high.beta, &pick(|f| f.beta_high)),
        alpha_gap: summarise(config.high.alpha - config.low.alpha, &pick(|f| f.alpha_gap)),
        beta_gap: summarise(config.high.beta - config.low.beta, &pick(|f| f.beta_gap)),
        mean_first_stage_f: math::stable_mean(&first_stage),
    })
}
