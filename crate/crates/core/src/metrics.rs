//! Over-updating measures, update magnitudes and subject calibration.
//!
//! The benchmark for a row is the Bayesian posterior of the subject's own
//! *reported* prior. A positive over-update means the belief moved too far
//! in the direction of the signal; a ratio below -1 means it moved the wrong
//! way.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::bayes_posterior;
use crate::elicitation::{update_truth, ReportWindow};
use crate::math;
use crate::record::{ResponseRecord, Signal, Treatment};
use crate::special;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("a confidence interval needs at least 2 reports, found {0}")]
    TooFewReports(usize),
}

/// Per-row over-updating measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverUpdateRow {
    pub bayes_benchmark: f64,
    pub over_update: f64,
    /// `None` when the reported prior admits no Bayesian movement.
    pub over_update_ratio: Option<f64>,
    pub update_magnitude: f64,
}

/// Bayesian posterior of the reported prior, in percentage points.
pub fn bayes_benchmark(record: &ResponseRecord) -> f64 {
    let prior = (record.reported_prior / 100.0).clamp(0.0, 1.0);
    100.0 * bayes_posterior(prior, record.signal, &record.signal_model()).expect("symmetric binary model")
}

fn signed_over_update(record: &ResponseRecord, benchmark: f64) -> f64 {
    match record.signal {
        Signal::Positive => record.reported_update - benchmark,
        Signal::Negative => benchmark - record.reported_update,
    }
}

pub fn over_update(record: &ResponseRecord) -> f64 {
    signed_over_update(record, bayes_benchmark(record))
}

/// Over-update scaled by the size of the Bayesian move.
pub fn over_update_ratio(record: &ResponseRecord) -> Option<f64> {
    row_metrics(record).over_update_ratio
}

pub fn update_magnitude(record: &ResponseRecord) -> f64 {
    (record.reported_update - record.reported_prior).abs()
}

pub fn row_metrics(record: &ResponseRecord) -> OverUpdateRow {
    let bayes_benchmark = bayes_benchmark(record);
    let over_update = signed_over_update(record, bayes_benchmark);
    let denominator = (record.reported_prior - bayes_benchmark).abs();
    OverUpdateRow {
        bayes_benchmark,
        over_update,
        over_update_ratio: (denominator > 0.0).then(|| over_update / denominator),
        update_magnitude: update_magnitude(record),
    }
}

/// Which elicited belief a calibration refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeliefKind {
    Prior,
    Update,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Over,
    Neutral,
    Under,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectCalibration {
    pub n: usize,
    pub mean_confidence: f64,
    pub hit_proportion: f64,
    pub continuous_overconfidence: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub classification: Classification,
}

/// `(confidence, hit)` pairs, one per elicited belief.
fn calibration_pairs(records: &[ResponseRecord], kind: BeliefKind, treatment: Option<Treatment>) -> Vec<(f64, bool)> {
    let window = ReportWindow::default();
    let rows = records
        .iter()
        .filter(|r| r.is_main() && treatment.is_none_or(|t| r.treatment == t));
    match kind {
        BeliefKind::Prior => {
            // The prior is elicited once per task even though every branch row
            // repeats it.
            let mut seen = BTreeMap::new();
            for r in rows {
                seen.entry((r.treatment, r.task_id)).or_insert_with(|| {
                    (r.prior_confidence, window.contains(r.reported_prior, f64::from(r.actual_prior)))
                });
            }
            seen.into_values().collect()
        }
        BeliefKind::Update => rows
            .map(|r| {
                let truth = update_truth(r.actual_prior, r.signal_accuracy, r.signal);
                (r.update_confidence, window.contains(r.reported_update, truth))
            })
            .collect(),
    }
}

/// Compares a subject's mean stated confidence with how often the reports
/// were actually within the window.
///
/// The subject is over-confident when the hit rate falls below the two-sided
/// 95% t-interval of the mean confidence and under-confident when it lies
/// above it. Constant confidences give a point interval.
pub fn subject_calibration(
    records: &[ResponseRecord],
    kind: BeliefKind,
    treatment: Option<Treatment>,
) -> Result<SubjectCalibration, MetricsError> {
    let pairs = calibration_pairs(records, kind, treatment);
    let n = pairs.len();
    if n < 2 {
        return Err(MetricsError::TooFewReports(n));
    }
    let confidences: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mean = math::stable_mean(&confidences).expect("nonempty");
    let squares: Vec<f64> = confidences.iter().map(|c| (c - mean) * (c - mean)).collect();
    let sd = math::sqrt(math::stable_sum(&squares) / (n - 1) as f64);
    let half = special::t_quantile(0.975, (n - 1) as f64) * sd / math::sqrt(n as f64);
    let (ci_low, ci_high) = (mean - half, mean + half);
    let hits = pairs.iter().filter(|p| p.1).count();
    let hit_proportion = 100.0 * hits as f64 / n as f64;
    let classification = if hit_proportion < ci_low {
        Classification::Over
    } else if hit_proportion > ci_high {
        Classification::Under
    } else {
        Classification::Neutral
    };
    Ok(SubjectCalibration {
        n,
        mean_confidence: mean,
        hit_proportion,
        continuous_overconfidence: mean - hit_proportion,
        ci_low,
        ci_high,
        classification,
    })
}

/// Which update rows enter an aggregate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum AggregationMode {
    /// Every elicited branch.
    #[default]
    AllRows,
    /// One branch per task, chosen by simulating the task's signal.
    OneDrawnPerTask { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Treatment,
    TreatmentPrior,
    TreatmentAccuracy,
}

/// Row-level quantity averaged by [`aggregate`] and [`subject_means`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    OverUpdate,
    OverUpdateRatio,
    UpdateMagnitude,
    PriorConfidence,
    UpdateConfidence,
}

impl Metric {
    fn value(self, record: &ResponseRecord, row: &OverUpdateRow) -> Option<f64> {
        match self {
            Metric::OverUpdate => Some(row.over_update),
            Metric::OverUpdateRatio => row.over_update_ratio,
            Metric::UpdateMagnitude => Some(row.update_magnitude),
            Metric::PriorConfidence => Some(record.prior_confidence),
            Metric::UpdateConfidence => Some(record.update_confidence),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub treatment: Treatment,
    /// Actual prior or accuracy, depending on the grouping.
    pub level: Option<u8>,
    pub n_rows: usize,
    pub mean_over_update: f64,
    pub n_ratio: usize,
    pub mean_over_update_ratio: Option<f64>,
    pub mean_update_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Main rows considered (practice and comprehension excluded).
    pub n_main_rows: usize,
    pub dropped_degenerate: usize,
    /// Branches not selected under [`AggregationMode::OneDrawnPerTask`].
    pub dropped_unselected: usize,
    pub n_over_update: usize,
    /// Rows whose ratio is undefined.
    pub dropped_undefined_ratio: usize,
    pub n_ratio: usize,
    pub groups: Vec<GroupSummary>,
}

/// A kept row with its metrics.
pub type SelectedRow<'a> = (&'a ResponseRecord, OverUpdateRow);

/// Rows entering aggregates, with their metrics, plus drop counts
/// `(degenerate, unselected)`.
pub fn select_rows(records: &[ResponseRecord], mode: AggregationMode) -> (Vec<SelectedRow<'_>>, usize, usize) {
    let mut degenerate = 0;
    let mut kept: Vec<&ResponseRecord> = Vec::new();
    for r in records.iter().filter(|r| r.is_main()) {
        if r.is_degenerate_task() {
            degenerate += 1;
        } else {
            kept.push(r);
        }
    }
    let mut unselected = 0;
    if let AggregationMode::OneDrawnPerTask { seed } = mode {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tasks: BTreeMap<(&str, Treatment, u32), Signal> = BTreeMap::new();
        let mut keys: Vec<(&str, Treatment, u32, u8, u8)> = kept
            .iter()
            .map(|r| (r.subject_id.as_str(), r.treatment, r.task_id, r.actual_prior, r.signal_accuracy))
            .collect();
        keys.sort();
        keys.dedup();
        for (s, t, id, prior, acc) in keys {
            let success = rng.random::<f64>() < f64::from(prior) / 100.0;
            let accurate = rng.random::<f64>() < f64::from(acc) / 100.0;
            let signal = if success == accurate { Signal::Positive } else { Signal::Negative };
            tasks.insert((s, t, id), signal);
        }
        let before = kept.len();
        kept.retain(|r| tasks[&(r.subject_id.as_str(), r.treatment, r.task_id)] == r.signal);
        unselected = before - kept.len();
    }
    let rows = kept.into_iter().map(|r| (r, row_metrics(r))).collect();
    (rows, degenerate, unselected)
}

/// Means of the over-updating measures by group. Degenerate-task rows are
/// excluded and undefined ratios dropped, with both counts reported.
pub fn aggregate(records: &[ResponseRecord], group_by: GroupBy, mode: AggregationMode) -> MetricsSummary {
    let n_main_rows = records.iter().filter(|r| r.is_main()).count();
    let (rows, dropped_degenerate, dropped_unselected) = select_rows(records, mode);
    let mut groups: BTreeMap<(Treatment, Option<u8>), Vec<SelectedRow<'_>>> = BTreeMap::new();
    for (r, m) in &rows {
        let level = match group_by {
            GroupBy::Treatment => None,
            GroupBy::TreatmentPrior => Some(r.actual_prior),
            GroupBy::TreatmentAccuracy => Some(r.signal_accuracy),
        };
        groups.entry((r.treatment, level)).or_default().push((r, *m));
    }
    let groups = groups
        .into_iter()
        .map(|((treatment, level), rows)| {
            let over: Vec<f64> = rows.iter().map(|(_, m)| m.over_update).collect();
            let ratio: Vec<f64> = rows.iter().filter_map(|(_, m)| m.over_update_ratio).collect();
            let magnitude: Vec<f64> = rows.iter().map(|(_, m)| m.update_magnitude).collect();
            GroupSummary {
                treatment,
                level,
                n_rows: rows.len(),
                mean_over_update: math::stable_mean(&over).expect("groups are nonempty"),
                n_ratio: ratio.len(),
                mean_over_update_ratio: math::stable_mean(&ratio),
                mean_update_magnitude: math::stable_mean(&magnitude).expect("groups are nonempty"),
            }
        })
        .collect();
    let n_ratio = rows.iter().filter(|(_, m)| m.over_update_ratio.is_some()).count();
    MetricsSummary {
        n_main_rows,
        dropped_degenerate,
        dropped_unselected,
        n_over_update: rows.len(),
        dropped_undefined_ratio: rows.len() - n_ratio,
        n_ratio,
        groups,
    }
}

/// A subject's mean of one metric in each treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeans {
    pub subject_id: String,
    pub low: Option<f64>,
    pub high: Option<f64>,
}

impl SubjectMeans {
    /// `high - low` when both are present.
    pub fn difference(&self) -> Option<f64> {
        Some(self.high? - self.low?)
    }
}

/// Per-subject means by treatment, sorted by subject id. Confidence metrics
/// use every main row; the over-updating metrics use the aggregated rows.
pub fn subject_means(records: &[ResponseRecord], metric: Metric, mode: AggregationMode) -> Vec<SubjectMeans> {
    let mut values: BTreeMap<String, [Vec<f64>; 2]> = BTreeMap::new();
    let mut push = |r: &ResponseRecord, v: Option<f64>| {
        let slot = values.entry(r.subject_id.clone()).or_default();
        if let Some(v) = v {
            slot[usize::from(r.treatment.is_high())].push(v);
        }
    };
    match metric {
        Metric::PriorConfidence | Metric::UpdateConfidence => {
            let kind = if metric == Metric::PriorConfidence { BeliefKind::Prior } else { BeliefKind::Update };
            let mut by_subject: BTreeMap<&str, Vec<ResponseRecord>> = BTreeMap::new();
            for r in records.iter().filter(|r| r.is_main()) {
                by_subject.entry(r.subject_id.as_str()).or_default().push(r.clone());
            }
            for (_, rows) in by_subject {
                for t in Treatment::ALL {
                    let pairs = calibration_pairs(&rows, kind, Some(t));
                    if let Some(first) = rows.iter().find(|r| r.treatment == t) {
                        let confidences: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                        push(first, math::stable_mean(&confidences));
                    }
                }
            }
        }
        _ => {
            for (r, m) in select_rows(records, mode).0 {
                push(r, metric.value(r, &m));
            }
        }
    }
    values
        .into_iter()
        .map(|(id, [low, high])| SubjectMeans {
            subject_id: id,
            low: math::stable_mean(&low),
            high: math::stable_mean(&high),
        })
        .collect()
}
