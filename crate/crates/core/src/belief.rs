//! Updating rules over a finite state space.
//!
//! An agent who is unsure which prior is correct holds a [`MixtureBelief`]:
//! candidate priors `π_{0,i}` with second-order weights `k_{0,i}`. Bayesian
//! updating of both the components and the weights lands on the same average
//! posterior as updating the average prior once. The same holds for any rule
//! that distorts the likelihood through a map `T` and reweights components
//! with the distorted signal probability.
//!
//! Everything here is written for a general finite state space and signal
//! space. The binary success/failure case (states `[S, F]`, signals
//! `[positive, negative]`) has scalar wrappers: [`bayes_posterior`],
//! [`distorted_posterior`] and [`grether_posterior`].

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::record::Signal;

/// Tolerance on "sums to one" checks.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Keys of a tabulated distortion match likelihoods within this distance,
/// so `0.2` finds `1.0 - 0.8`.
pub const TABLE_KEY_TOLERANCE: f64 = 1e-12;

/// Likelihood gaps smaller than this count as ties in maximum-likelihood
/// updating.
pub const MLU_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeliefError {
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("distribution sums to {sum}, expected 1")]
    InvalidDistribution { sum: f64 },
    #[error("expected {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("second-order weights sum to {sum}, expected 1")]
    InvalidWeights { sum: f64 },
    #[error("a mixture needs at least one component")]
    EmptyMixture,
    #[error("state space needs at least two distinct labels")]
    InvalidStateSpace,
    #[error("signal model row {row} sums to {sum}, expected 1")]
    InvalidSignalModel { row: usize, sum: f64 },
    #[error("operation needs the binary success/failure model")]
    NotBinary,
    #[error("symmetric accuracy {0} is outside (0.5, 1]")]
    InvalidAccuracy(f64),
    #[error("signal index {0} is out of range")]
    UnknownSignal(usize),
    #[error("observed signal has zero probability under the belief")]
    DegenerateEvidence,
    #[error("Grether rule is undefined at a degenerate prior with zero prior weight")]
    UndefinedForm,
    #[error("distortion maps {at} to {value}; it must be finite and nonnegative")]
    InvalidDistortion { at: f64, value: f64 },
    #[error("tabulated distortion has no entry for likelihood {0}")]
    MissingDistortionValue(f64),
    #[error("Grether weights must be finite and nonnegative (alpha={alpha}, beta={beta})")]
    InvalidGretherParams { alpha: f64, beta: f64 },
}

pub type Result<T> = core::result::Result<T, BeliefError>;

/// A number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(BeliefError::InvalidProbability(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// From an integer or real percentage.
    pub fn from_percent(pp: f64) -> Result<Self> {
        Self::new(pp / 100.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = BeliefError;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

fn check_probability(p: f64) -> Result<f64> {
    Probability::new(p).map(Probability::get)
}

/// Ordered, labelled states. The binary default is `[S, F]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(BeliefError::InvalidStateSpace);
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[i + 1..].contains(a) {
                return Err(BeliefError::InvalidStateSpace);
            }
        }
        Ok(Self { labels })
    }

    pub fn binary() -> Self {
        Self { labels: vec!["S".to_string(), "F".to_string()] }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

fn check_distribution(dist: &[f64], n_states: usize) -> Result<()> {
    if dist.len() != n_states {
        return Err(BeliefError::DimensionMismatch { expected: n_states, found: dist.len() });
    }
    for &p in dist {
        check_probability(p)?;
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(BeliefError::InvalidDistribution { sum });
    }
    Ok(())
}

/// `P(σ | ω)` for every state and signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    states: StateSpace,
    signals: Vec<String>,
    /// One row per state, one column per signal.
    likelihood: Vec<Vec<f64>>,
}

impl SignalModel {
    pub fn new(states: StateSpace, signals: Vec<String>, likelihood: Vec<Vec<f64>>) -> Result<Self> {
        if likelihood.len() != states.len() {
            return Err(BeliefError::DimensionMismatch {
                expected: states.len(),
                found: likelihood.len(),
            });
        }
        for (row, probs) in likelihood.iter().enumerate() {
            if probs.len() != signals.len() {
                return Err(BeliefError::DimensionMismatch {
                    expected: signals.len(),
                    found: probs.len(),
                });
            }
            for &p in probs {
                check_probability(p)?;
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(BeliefError::InvalidSignalModel { row, sum });
            }
        }
        Ok(Self { states, signals, likelihood })
    }

    /// Binary test that matches the true state with probability `accuracy`.
    pub fn symmetric(accuracy: f64) -> Result<Self> {
        if !(accuracy > 0.5 && accuracy <= 1.0) {
            return Err(BeliefError::InvalidAccuracy(accuracy));
        }
        Ok(Self {
            states: StateSpace::binary(),
            signals: vec!["positive".to_string(), "negative".to_string()],
            likelihood: vec![vec![accuracy, 1.0 - accuracy], vec![1.0 - accuracy, accuracy]],
        })
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn is_binary(&self) -> bool {
        self.n_states() == 2 && self.n_signals() == 2
    }

    /// `P(signal | state)`.
    pub fn likelihood(&self, signal: usize, state: usize) -> f64 {
        self.likelihood[state][signal]
    }

    fn check_signal(&self, signal: usize) -> Result<()> {
        if signal < self.n_signals() {
            Ok(())
        } else {
            Err(BeliefError::UnknownSignal(signal))
        }
    }

    fn require_binary(&self) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(BeliefError::NotBinary)
        }
    }
}

/// Map applied to likelihoods before updating.
///
/// Tabulated maps are looked up at the exact likelihood values of the
/// signal model; there is no interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Distortion {
    Identity,
    /// `x ↦ x^a`, with `0^0 = 1`.
    Power(f64),
    /// `(x, T(x))` pairs.
    Tabulated(Vec<(f64, f64)>),
}

impl Distortion {
    pub fn power(exponent: f64) -> Result<Self> {
        if exponent.is_finite() && exponent >= 0.0 {
            Ok(Self::Power(exponent))
        } else {
            Err(BeliefError::InvalidDistortion { at: f64::NAN, value: exponent })
        }
    }

    pub fn tabulated(entries: Vec<(f64, f64)>) -> Result<Self> {
        for &(at, value) in &entries {
            if !(value.is_finite() && value >= 0.0) {
                return Err(BeliefError::InvalidDistortion { at, value });
            }
        }
        Ok(Self::Tabulated(entries))
    }

    /// Tabulates `f` at every likelihood value of `model`.
    pub fn tabulate_for(model: &SignalModel, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        let mut entries: Vec<(f64, f64)> = Vec::new();
        for row in &model.likelihood {
            for &x in row {
                if !entries.iter().any(|&(at, _)| (at - x).abs() <= TABLE_KEY_TOLERANCE) {
                    entries.push((x, f(x)));
                }
            }
        }
        Self::tabulated(entries)
    }

    /// `T(x)`. Values that break the nonnegativity invariant are reported
    /// as errors, so hand-built variants cannot slip through.
    pub fn apply(&self, x: f64) -> Result<f64> {
        let value = match self {
            Distortion::Identity => x,
            Distortion::Power(a) => math::powf(x, *a),
            Distortion::Tabulated(entries) => entries
                .iter()
                .find(|&&(at, _)| (at - x).abs() <= TABLE_KEY_TOLERANCE)
                .map(|&(_, v)| v)
                .ok_or(BeliefError::MissingDistortionValue(x))?,
        };
        if value.is_finite() && value >= 0.0 {
            Ok(value)
        } else {
            Err(BeliefError::InvalidDistortion { at: x, value })
        }
    }
}

/// Grether weights: `alpha` on the likelihood ratio, `beta` on the prior odds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GretherParams {
    pub alpha: f64,
    pub beta: f64,
}

impl GretherParams {
    pub const BAYES: GretherParams = GretherParams { alpha: 1.0, beta: 1.0 };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha.is_finite() && beta.is_finite() && alpha >= 0.0 && beta >= 0.0 {
            Ok(Self { alpha, beta })
        } else {
            Err(BeliefError::InvalidGretherParams { alpha, beta })
        }
    }
}

/// One candidate prior and its second-order weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub prior: Vec<f64>,
    pub weight: f64,
}

/// Finite set of priors with second-order weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureBelief {
    components: Vec<Component>,
}

impl MixtureBelief {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let first = components.first().ok_or(BeliefError::EmptyMixture)?;
        let n_states = first.prior.len();
        if n_states < 2 {
            return Err(BeliefError::InvalidStateSpace);
        }
        for c in &components {
            check_distribution(&c.prior, n_states)?;
            check_probability(c.weight)?;
        }
        let sum: f64 = components.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(BeliefError::InvalidWeights { sum });
        }
        Ok(Self { components })
    }

    /// Binary mixture from `(P(S), weight)` pairs.
    pub fn from_success_probs(pairs: &[(f64, f64)]) -> Result<Self> {
        let mut components = Vec::with_capacity(pairs.len());
        for &(p, weight) in pairs {
            let p = check_probability(p)?;
            components.push(Component { prior: vec![p, 1.0 - p], weight });
        }
        Self::new(components)
    }

    pub fn single(prior: Vec<f64>) -> Result<Self> {
        Self::new(vec![Component { prior, weight: 1.0 }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.components[0].prior.len()
    }

    /// `Σ_i k_i π_i`, state by state.
    pub fn average(&self) -> Vec<f64> {
        let mut avg = vec![0.0; self.n_states()];
        for c in &self.components {
            for (a, p) in avg.iter_mut().zip(&c.prior) {
                *a += c.weight * p;
            }
        }
        avg
    }

    /// Probability of the first state (success, in the binary case) under
    /// the average prior.
    pub fn average_success(&self) -> f64 {
        self.average()[0]
    }

    fn check_model(&self, model: &SignalModel) -> Result<()> {
        if self.n_states() == model.n_states() {
            Ok(())
        } else {
            Err(BeliefError::DimensionMismatch { expected: model.n_states(), found: self.n_states() })
        }
    }
}

/// Posterior mixture plus its average, computed component by component.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureUpdate {
    pub posterior: MixtureBelief,
    pub average: Vec<f64>,
}

impl MixtureUpdate {
    pub fn average_success(&self) -> f64 {
        self.average[0]
    }
}

/// Average prior of a mixture.
pub fn average_prior(mix: &MixtureBelief) -> Vec<f64> {
    mix.average()
}

/// `Σ_ω π(ω) T[P(σ|ω)]` and the unnormalised posterior terms.
fn weighted_terms(
    prior: &[f64],
    signal: usize,
    model: &SignalModel,
    distortion: &Distortion,
) -> Result<(Vec<f64>, f64)> {
    let mut terms = Vec::with_capacity(prior.len());
    for (state, &p) in prior.iter().enumerate() {
        terms.push(p * distortion.apply(model.likelihood(signal, state))?);
    }
    let total = terms.iter().sum();
    Ok((terms, total))
}

/// Distorted-likelihood update of a single prior:
/// `π_1(ω) = π_0(ω) T[P(σ|ω)] / Σ_ω' π_0(ω') T[P(σ|ω')]`.
pub fn distorted_update(
    prior: &[f64],
    signal: usize,
    model: &SignalModel,
    distortion: &Distortion,
) -> Result<Vec<f64>> {
    check_distribution(prior, model.n_states())?;
    model.check_signal(signal)?;
    let (terms, total) = weighted_terms(prior, signal, model, distortion)?;
    if total <= 0.0 {
        return Err(BeliefError::DegenerateEvidence);
    }
    Ok(terms.into_iter().map(|t| t / total).collect())
}

/// Bayes' rule on a single prior.
pub fn bayes_update(prior: &[f64], signal: usize, model: &SignalModel) -> Result<Vec<f64>> {
    distorted_update(prior, signal, model, &Distortion::Identity)
}

/// Updates every component with the distorted rule and reweights the
/// components by their perceived signal probability `P*_i(σ)`.
///
/// Every `P*_i(σ)` must be positive.
pub fn distorted_mixture_update(
    mix: &MixtureBelief,
    signal: usize,
    model: &SignalModel,
    distortion: &Distortion,
) -> Result<MixtureUpdate> {
    mix.check_model(model)?;
    model.check_signal(signal)?;
    let mut updated = Vec::with_capacity(mix.len());
    let mut total = 0.0;
    for c in mix.components() {
        let (terms, p_i) = weighted_terms(&c.prior, signal, model, distortion)?;
        if p_i <= 0.0 {
            return Err(BeliefError::DegenerateEvidence);
        }
        total += c.weight * p_i;
        updated.push((terms, p_i, c.weight));
    }
    Ok(finish_mixture(updated, total))
}

fn finish_mixture(updated: Vec<(Vec<f64>, f64, f64)>, total: f64) -> MixtureUpdate {
    let n_states = updated[0].0.len();
    let mut average = vec![0.0; n_states];
    let mut components = Vec::with_capacity(updated.len());
    for (terms, p_i, k0) in updated {
        let weight = k0 * p_i / total;
        let prior: Vec<f64> = terms.iter().map(|t| t / p_i).collect();
        for (a, p) in average.iter_mut().zip(&prior) {
            *a += weight * p;
        }
        components.push(Component { prior, weight });
    }
    MixtureUpdate { posterior: MixtureBelief { components }, average }
}

/// Bayesian update of both the component priors and their weights.
///
/// Components that assign the signal zero probability keep their prior and
/// drop to zero weight; only the mixture-level `P(σ)` has to be positive.
pub fn mixture_bayes_update(
    mix: &MixtureBelief,
    signal: usize,
    model: &SignalModel,
) -> Result<MixtureUpdate> {
    mix.check_model(model)?;
    model.check_signal(signal)?;
    let identity = Distortion::Identity;
    let mut parts = Vec::with_capacity(mix.len());
    let mut total = 0.0;
    for c in mix.components() {
        let (terms, p_i) = weighted_terms(&c.prior, signal, model, &identity)?;
        total += c.weight * p_i;
        parts.push((terms, p_i, c));
    }
    if total <= 0.0 {
        return Err(BeliefError::DegenerateEvidence);
    }
    let mut average = vec![0.0; mix.n_states()];
    let mut components = Vec::with_capacity(parts.len());
    for (terms, p_i, c) in parts {
        let (prior, weight) = if p_i > 0.0 {
            (terms.iter().map(|t| t / p_i).collect::<Vec<_>>(), c.weight * p_i / total)
        } else {
            (c.prior.clone(), 0.0)
        };
        for (a, p) in average.iter_mut().zip(&prior) {
            *a += weight * p;
        }
        components.push(Component { prior, weight });
    }
    Ok(MixtureUpdate { posterior: MixtureBelief { components }, average })
}

/// Full Bayesian updating: each prior is updated, the weights are left
/// where they were.
pub fn fbu_update(mix: &MixtureBelief, signal: usize, model: &SignalModel) -> Result<MixtureUpdate> {
    mix.check_model(model)?;
    let mut average = vec![0.0; mix.n_states()];
    let mut components = Vec::with_capacity(mix.len());
    for c in mix.components() {
        let prior = bayes_update(&c.prior, signal, model)?;
        for (a, p) in average.iter_mut().zip(&prior) {
            *a += c.weight * p;
        }
        components.push(Component { prior, weight: c.weight });
    }
    Ok(MixtureUpdate { posterior: MixtureBelief { components }, average })
}

/// Index of the component under which the signal is most likely.
///
/// Near-ties (within [`MLU_TIE_TOLERANCE`]) go to the component with the
/// larger probability on the first state, then to the lowest index.
pub fn most_likely_component(mix: &MixtureBelief, signal: usize, model: &SignalModel) -> Result<usize> {
    mix.check_model(model)?;
    model.check_signal(signal)?;
    let identity = Distortion::Identity;
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in mix.components().iter().enumerate() {
        let (_, p_i) = weighted_terms(&c.prior, signal, model, &identity)?;
        best = match best {
            None => Some((i, p_i)),
            Some((j, p_j)) => {
                let better = if (p_i - p_j).abs() <= MLU_TIE_TOLERANCE {
                    c.prior[0] > mix.components()[j].prior[0]
                } else {
                    p_i > p_j
                };
                if better { Some((i, p_i)) } else { Some((j, p_j)) }
            }
        };
    }
    Ok(best.expect("mixture is non-empty").0)
}

/// Maximum-likelihood updating: Bayes' rule on the prior that made the
/// signal most likely.
pub fn mlu_update(mix: &MixtureBelief, signal: usize, model: &SignalModel) -> Result<Vec<f64>> {
    let i = most_likely_component(mix, signal, model)?;
    bayes_update(&mix.components()[i].prior, signal, model)
}

/// Split of the mixture posterior into the fixed-weight (FBU) average and
/// the shift caused by reweighting the priors.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDecomposition {
    pub fixed_weight_average: Vec<f64>,
    pub reweighting_delta: Vec<f64>,
}

impl UpdateDecomposition {
    pub fn total(&self) -> Vec<f64> {
        self.fixed_weight_average.iter().zip(&self.reweighting_delta).map(|(a, d)| a + d).collect()
    }
}

pub fn update_decomposition(
    mix: &MixtureBelief,
    signal: usize,
    model: &SignalModel,
) -> Result<UpdateDecomposition> {
    let full = mixture_bayes_update(mix, signal, model)?;
    let fixed = fbu_update(mix, signal, model)?;
    let reweighting_delta = full.average.iter().zip(&fixed.average).map(|(f, x)| f - x).collect();
    Ok(UpdateDecomposition { fixed_weight_average: fixed.average, reweighting_delta })
}

/// Binary Bayes posterior `P(S | σ)` from a prior `P(S)`.
pub fn bayes_posterior(prior: f64, signal: Signal, model: &SignalModel) -> Result<f64> {
    distorted_posterior(prior, signal, model, &Distortion::Identity)
}

/// Binary distorted-likelihood posterior.
pub fn distorted_posterior(
    prior: f64,
    signal: Signal,
    model: &SignalModel,
    distortion: &Distortion,
) -> Result<f64> {
    model.require_binary()?;
    let p = check_probability(prior)?;
    let s = signal.index();
    let success = p * distortion.apply(model.likelihood(s, 0))?;
    let failure = (1.0 - p) * distortion.apply(model.likelihood(s, 1))?;
    let total = success + failure;
    if total <= 0.0 {
        return Err(BeliefError::DegenerateEvidence);
    }
    Ok(success / total)
}

/// Binary Grether posterior:
/// `odds_1 = (P(σ|S)/P(σ|F))^alpha · (π_0/(1-π_0))^beta`.
pub fn grether_posterior(
    prior: f64,
    signal: Signal,
    model: &SignalModel,
    params: GretherParams,
) -> Result<f64> {
    model.require_binary()?;
    let p = check_probability(prior)?;
    let GretherParams { alpha, beta } = GretherParams::new(params.alpha, params.beta)?;
    if (p == 0.0 || p == 1.0) && beta == 0.0 {
        return Err(BeliefError::UndefinedForm);
    }
    let s = signal.index();
    let (ls, lf) = (model.likelihood(s, 0), model.likelihood(s, 1));
    if p > 0.0 && p < 1.0 && ls > 0.0 && lf > 0.0 {
        let log_odds = alpha * (math::ln(ls) - math::ln(lf)) + beta * math::logit(p);
        return Ok(math::logistic(log_odds));
    }
    let success = math::powf(ls, alpha) * math::powf(p, beta);
    let failure = math::powf(lf, alpha) * math::powf(1.0 - p, beta);
    let total = success + failure;
    if total <= 0.0 {
        return Err(BeliefError::DegenerateEvidence);
    }
    Ok(success / total)
}
