//! The Grether regression
//!
//! `logit(pi_1) = g0 x_signal + g1 x_prior + g2 x_signal H + g3 x_prior H + e`
//!
//! with `x_signal` the log likelihood ratio, `x_prior` the log prior odds and
//! `H` the High-treatment indicator, giving `alpha_L = g0`, `beta_L = g1`,
//! `alpha_H = g0 + g2` and `beta_H = g1 + g3`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::regression::{cluster_codes, f_test, linear_combination, ols, tsls, within_transform, Covariance, Estimate, RegressionFit};
use super::{EconError, Result, TestResult};
use crate::math;
use crate::metrics::{select_rows, AggregationMode, Metric};
use crate::record::{ResponseRecord, Signal, Treatment};

pub const GRETHER_NAMES: [&str; 4] = ["signal", "prior", "signal_x_high", "prior_x_high"];

/// One update row in log-odds form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GretherRow {
    pub subject_id: String,
    pub treatment: Treatment,
    pub signal_accuracy: u8,
    pub y: f64,
    pub x_signal: f64,
    pub x_prior: f64,
    pub high: f64,
    /// Log odds of the actual prior; `None` for the 0% and 100% grids.
    pub instrument: Option<f64>,
}

/// Rows left out of a Grether regression, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GretherDrops {
    /// Practice and comprehension rows.
    pub non_main: usize,
    /// Reported prior or update at 0 or 100.
    pub undefined_log_ratio: usize,
    /// Actual prior at 0 or 100 when the actual prior is the instrument.
    pub undefined_instrument: usize,
    /// Rows outside the requested accuracy subset.
    pub outside_subset: usize,
}

fn log_odds_pp(pp: f64) -> Option<f64> {
    (pp > 0.0 && pp < 100.0).then(|| math::logit(pp / 100.0))
}

/// Converts update rows to log-odds form, dropping rows whose log ratios are
/// undefined.
pub fn build_grether_rows(records: &[ResponseRecord]) -> (Vec<GretherRow>, GretherDrops) {
    let mut drops = GretherDrops::default();
    let mut rows = Vec::new();
    for r in records {
        if !r.is_main() {
            drops.non_main += 1;
            continue;
        }
        let (Some(y), Some(x_prior)) = (log_odds_pp(r.reported_update), log_odds_pp(r.reported_prior)) else {
            drops.undefined_log_ratio += 1;
            continue;
        };
        let lr = math::logit(f64::from(r.signal_accuracy) / 100.0);
        rows.push(GretherRow {
            subject_id: r.subject_id.clone(),
            treatment: r.treatment,
            signal_accuracy: r.signal_accuracy,
            y,
            x_signal: if r.signal == Signal::Positive { lr } else { -lr },
            x_prior,
            high: if r.treatment.is_high() { 1.0 } else { 0.0 },
            instrument: log_odds_pp(f64::from(r.actual_prior)),
        });
    }
    (rows, drops)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GretherInstrument {
    #[default]
    None,
    /// Instrument the reported prior with the actual prior.
    ActualPrior,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GretherSubset {
    #[default]
    Pooled,
    Accuracy(u8),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GretherOptions {
    pub instrument: GretherInstrument,
    pub fixed_effects: bool,
    pub subset: GretherSubset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GretherEstimate {
    pub options: GretherOptions,
    pub fit: RegressionFit,
    pub alpha_low: Estimate,
    pub beta_low: Estimate,
    pub alpha_high: Estimate,
    pub beta_high: Estimate,
    /// `alpha_H - alpha_L`.
    pub alpha_gap: Estimate,
    /// `beta_H - beta_L`.
    pub beta_gap: Estimate,
    /// `alpha_L = beta_L = 1`.
    pub bayes_low: TestResult,
    /// `alpha_H = beta_H = 1`.
    pub bayes_high: TestResult,
    /// `alpha_L = alpha_H` and `beta_L = beta_H`.
    pub equal_treatments: TestResult,
    pub drops: GretherDrops,
}

fn check_identification(rows: &[GretherRow]) -> Result<()> {
    for t in Treatment::ALL {
        let mut priors: Vec<f64> = rows.iter().filter(|r| r.treatment == t).map(|r| r.x_prior).collect();
        priors.sort_by(f64::total_cmp);
        priors.dedup();
        if priors.len() < 2 {
            return Err(EconError::Identification { treatment: t.to_string() });
        }
    }
    Ok(())
}

fn restriction(rows: [[f64; 4]; 2]) -> DMatrix<f64> {
    DMatrix::from_fn(2, 4, |i, j| rows[i][j])
}

/// Estimates the treatment-specific Grether parameters, clustered by
/// subject. With fixed effects every variable (instruments included) is
/// demeaned within subject first.
pub fn grether_estimate(records: &[ResponseRecord], options: GretherOptions) -> Result<GretherEstimate> {
    let (mut rows, mut drops) = build_grether_rows(records);
    if let GretherSubset::Accuracy(acc) = options.subset {
        let before = rows.len();
        rows.retain(|r| r.signal_accuracy == acc);
        drops.outside_subset = before - rows.len();
    }
    let iv = options.instrument == GretherInstrument::ActualPrior;
    if iv {
        let before = rows.len();
        rows.retain(|r| r.instrument.is_some());
        drops.undefined_instrument = before - rows.len();
    }
    check_identification(&rows)?;

    let n = rows.len();
    let mut x = DMatrix::from_fn(n, 4, |i, j| {
        let r = &rows[i];
        match j {
            0 => r.x_signal,
            1 => r.x_prior,
            2 => r.x_signal * r.high,
            _ => r.x_prior * r.high,
        }
    });
    let mut y = DMatrix::from_fn(n, 1, |i, _| rows[i].y);
    let mut z = DMatrix::from_fn(n, 2, |i, j| {
        let inst = rows[i].instrument.unwrap_or(0.0);
        if j == 0 {
            inst
        } else {
            inst * rows[i].high
        }
    });
    let subjects: Vec<&str> = rows.iter().map(|r| r.subject_id.as_str()).collect();
    let clusters = cluster_codes(&subjects);
    if options.fixed_effects {
        x = within_transform(&x, &clusters)?;
        y = within_transform(&y, &clusters)?;
        z = within_transform(&z, &clusters)?;
    }
    let y: DVector<f64> = y.column(0).into_owned();
    let cov = Covariance::Cluster(&clusters);
    let fit = if iv {
        tsls(&y, &x, &GRETHER_NAMES, &[1, 3], &z, cov)?
    } else {
        ols(&y, &x, &GRETHER_NAMES, cov)?
    };

    let combo = |w: [f64; 4]| linear_combination(&fit, &w);
    let ones = DVector::from_vec(alloc::vec![1.0, 1.0]);
    Ok(GretherEstimate {
        alpha_low: combo([1.0, 0.0, 0.0, 0.0])?,
        beta_low: combo([0.0, 1.0, 0.0, 0.0])?,
        alpha_high: combo([1.0, 0.0, 1.0, 0.0])?,
        beta_high: combo([0.0, 1.0, 0.0, 1.0])?,
        alpha_gap: combo([0.0, 0.0, 1.0, 0.0])?,
        beta_gap: combo([0.0, 0.0, 0.0, 1.0])?,
        bayes_low: f_test(&fit, &restriction([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]), &ones)?,
        bayes_high: f_test(&fit, &restriction([[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]]), &ones)?,
        equal_treatments: f_test(
            &fit,
            &restriction([[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]),
            &DVector::zeros(2),
        )?,
        options,
        fit,
        drops,
    })
}

/// Regression of a row-level metric on the High indicator, clustered by
/// subject. Without fixed effects the design is `[constant, high]`; with
/// them both sides are demeaned within subject and the design is `[high]`.
pub fn treatment_regression(
    records: &[ResponseRecord],
    metric: Metric,
    fixed_effects: bool,
    mode: AggregationMode,
) -> Result<RegressionFit> {
    let observations: Vec<(&ResponseRecord, f64)> = match metric {
        Metric::PriorConfidence => records.iter().filter(|r| r.is_main()).map(|r| (r, r.prior_confidence)).collect(),
        Metric::UpdateConfidence => records.iter().filter(|r| r.is_main()).map(|r| (r, r.update_confidence)).collect(),
        _ => select_rows(records, mode)
            .0
            .into_iter()
            .filter_map(|(r, m)| {
                let v = match metric {
                    Metric::OverUpdate => Some(m.over_update),
                    Metric::OverUpdateRatio => m.over_update_ratio,
                    _ => Some(m.update_magnitude),
                };
                v.map(|v| (r, v))
            })
            .collect(),
    };
    let n = observations.len();
    let subjects: Vec<&str> = observations.iter().map(|(r, _)| r.subject_id.as_str()).collect();
    let clusters = cluster_codes(&subjects);
    let high = DMatrix::from_fn(n, 1, |i, _| if observations[i].0.treatment.is_high() { 1.0 } else { 0.0 });
    let y = DMatrix::from_fn(n, 1, |i, _| observations[i].1);
    let cov = Covariance::Cluster(&clusters);
    if fixed_effects {
        let x = within_transform(&high, &clusters)?;
        let y = within_transform(&y, &clusters)?;
        ols(&y.column(0).into_owned(), &x, &["high"], cov)
    } else {
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { high[(i, 0)] });
        ols(&y.column(0).into_owned(), &x, &["constant", "high"], cov)
    }
}
