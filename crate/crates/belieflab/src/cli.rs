//! Command-line front end: `simulate`, `estimate`, `metrics`, `verify` and
//! `serve`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 verification
//! failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use belieflab_core::econometrics::{
    grether_estimate, wilcoxon_signed_rank, Estimate, GretherDrops, GretherEstimate, GretherInstrument,
    GretherOptions, GretherSubset, TestResult,
};
use belieflab_core::metrics::{
    aggregate, subject_calibration, subject_means, AggregationMode, BeliefKind, Classification, GroupBy, Metric,
    MetricsSummary,
};
use belieflab_core::simulation::{
    simulate_experiment, AgentSpec, ReportPolicy, SimulationConfig, SimulationError, UpdatingRule,
};
use belieflab_core::verify::{run_all, SuiteReport, VerifyConfig};
use belieflab_core::{Distortion, GretherParams, ResponseRecord, Treatment};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::http;
use crate::schema;
use crate::session::{SessionService, SystemClock};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0} verification suite(s) failed")]
    Verification(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Io(_) => EXIT_DATA,
            CliError::Verification(_) => EXIT_VERIFY,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "belieflab", version, about = "Belief-updating experiments: simulate, estimate, verify and serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a subject pool and write the response CSV.
    Simulate(SimulateArgs),
    /// Fit the Grether model with treatment interactions.
    Estimate(EstimateArgs),
    /// Over-updating tables, calibration counts and treatment tests.
    Metrics(MetricsArgs),
    /// Run the randomised equivalence and elicitation checks.
    Verify(VerifyArgs),
    /// Run the live session service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    /// Bayes' rule on the mean perceived prior.
    Bayes,
    Grether,
    /// Full Bayesian updating (weights held fixed).
    Fbu,
    /// Maximum-likelihood updating.
    Mlu,
    /// Likelihoods distorted by `x^power`.
    Distorted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rounding {
    Integer,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 118)]
    pub subjects: usize,
    #[arg(long, value_enum, default_value_t = Model::Bayes)]
    pub model: Model,
    /// Grether signal weight (Low treatment, and High unless overridden).
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Grether prior weight (Low treatment, and High unless overridden).
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long)]
    pub alpha_high: Option<f64>,
    #[arg(long)]
    pub beta_high: Option<f64>,
    /// Exponent of the likelihood distortion for `--model distorted`.
    #[arg(long, default_value_t = 1.0)]
    pub power: f64,
    /// Perception noise (pp) in the Low treatment.
    #[arg(long, default_value_t = 8.0)]
    pub sigma_low: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_high: f64,
    /// Spread (pp) of the Low-treatment belief; defaults to --sigma-low.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Spread of the High-treatment belief; defaults to --sigma-high.
    #[arg(long)]
    pub tau_high: Option<f64>,
    /// Standard deviation of log-odds noise on reported priors.
    #[arg(long, default_value_t = 0.0)]
    pub report_noise: f64,
    #[arg(long, value_enum, default_value_t = Rounding::Integer)]
    pub report: Rounding,
    /// Update the whole second-order belief instead of its mean.
    #[arg(long)]
    pub mixture_updating: bool,
    #[arg(long)]
    pub seed: u64,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IvChoice {
    None,
    ActualPrior,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = IvChoice::None)]
    pub iv: IvChoice,
    /// Subject fixed effects.
    #[arg(long)]
    pub fe: bool,
    /// Also fit the 60% and 80% accuracy subsamples.
    #[arg(long)]
    pub by_accuracy: bool,
    /// Clustering variable; only `subject` is supported.
    #[arg(long, default_value = "subject")]
    pub cluster: String,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupChoice {
    Treatment,
    Prior,
    Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationChoice {
    /// Both signal branches of every task.
    AllRows,
    /// One branch per task, drawn with --seed.
    OneDrawn,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = GroupChoice::Treatment)]
    pub group_by: GroupChoice,
    #[arg(long, value_enum, default_value_t = AggregationChoice::AllRows)]
    pub aggregation: AggregationChoice,
    /// Required with --aggregation one-drawn.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Also write per-subject means, sorted within metric and treatment,
    /// as a long CSV for plotting.
    #[arg(long)]
    pub subject_means: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use a distortion with a negative value to check that violations are
    /// caught.
    #[arg(long, hide = true)]
    pub inject_negative_distortion: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Port to listen on; 0 picks a free one and prints it.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory for session event logs; in-memory only when unset.
    #[arg(long, env = "BELIEFLAB_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Directory of static web client files.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = write!(err, "{}", e.render());
            return EXIT_USAGE;
        }
        Err(e) => {
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => simulate(&a, out),
        Command::Estimate(a) => estimate(&a, out),
        Command::Metrics(a) => metrics(&a, out),
        Command::Verify(a) => verify(&a, out),
        Command::Serve(a) => serve(&a, out),
    }
}

fn grether(alpha: f64, beta: f64) -> Result<UpdatingRule, CliError> {
    GretherParams::new(alpha, beta)
        .map(UpdatingRule::Grether)
        .map_err(|e| CliError::Usage(e.to_string()))
}

pub fn agent_from_args(a: &SimulateArgs) -> Result<AgentSpec, CliError> {
    let (low_rule, high_rule) = match a.model {
        Model::Bayes => (UpdatingRule::BayesAverage, UpdatingRule::BayesAverage),
        Model::Grether => {
            (grether(a.alpha, a.beta)?, grether(a.alpha_high.unwrap_or(a.alpha), a.beta_high.unwrap_or(a.beta))?)
        }
        Model::Fbu => (UpdatingRule::Fbu, UpdatingRule::Fbu),
        Model::Mlu => (UpdatingRule::Mlu, UpdatingRule::Mlu),
        Model::Distorted => {
            let distortion = Distortion::power(a.power).map_err(|e| CliError::Usage(e.to_string()))?;
            let rule = UpdatingRule::Distorted { distortion };
            (rule.clone(), rule)
        }
    };
    let agent = AgentSpec {
        low_rule,
        high_rule,
        perception_sigma_low: a.sigma_low,
        perception_sigma_high: a.sigma_high,
        tau_low: a.tau.unwrap_or(a.sigma_low),
        tau_high: a.tau_high.unwrap_or(a.sigma_high),
        report_noise_sd: a.report_noise,
        policy: match a.report {
            Rounding::Integer => ReportPolicy::Integer,
            Rounding::Exact => ReportPolicy::Exact,
        },
        mixture_updating: a.mixture_updating,
    };
    agent.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(agent)
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let agent = agent_from_args(a)?;
    let data = simulate_experiment(&SimulationConfig::single(agent, a.subjects, a.seed)).map_err(|e| match e {
        SimulationError::Agent(_) | SimulationError::Design(_) => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    })?;
    let written = match &a.out {
        Some(path) => schema::write_records(BufWriter::new(File::create(path)?), &data.records),
        None => schema::write_records(&mut *out, &data.records),
    };
    written.map_err(|e| CliError::Data(e.to_string()))
}

pub fn load(path: &Path) -> Result<Vec<ResponseRecord>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    schema::read_records(io::BufReader::new(file)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Serialize)]
pub struct GretherReport {
    pub sample: String,
    pub instrument: GretherInstrument,
    pub fixed_effects: bool,
    pub n: usize,
    pub n_clusters: Option<usize>,
    pub coefficients: Vec<CoefficientRow>,
    pub alpha_low: Estimate,
    pub beta_low: Estimate,
    pub alpha_high: Estimate,
    pub beta_high: Estimate,
    pub alpha_gap: Estimate,
    pub beta_gap: Estimate,
    pub bayes_low: TestResult,
    pub bayes_high: TestResult,
    pub equal_treatments: TestResult,
    pub first_stage_f: Option<Vec<f64>>,
    pub drops: GretherDrops,
}

impl GretherReport {
    fn new(sample: String, est: &GretherEstimate) -> Self {
        let fit = &est.fit;
        Self {
            sample,
            instrument: est.options.instrument,
            fixed_effects: est.options.fixed_effects,
            n: fit.n,
            n_clusters: fit.n_clusters,
            coefficients: fit
                .names
                .iter()
                .enumerate()
                .map(|(i, name)| CoefficientRow { name: name.clone(), estimate: fit.coefficients[i], se: fit.se(i) })
                .collect(),
            alpha_low: est.alpha_low,
            beta_low: est.beta_low,
            alpha_high: est.alpha_high,
            beta_high: est.beta_high,
            alpha_gap: est.alpha_gap,
            beta_gap: est.beta_gap,
            bayes_low: est.bayes_low,
            bayes_high: est.bayes_high,
            equal_treatments: est.equal_treatments,
            first_stage_f: fit.first_stage_f.clone(),
            drops: est.drops,
        }
    }
}

fn estimate(a: &EstimateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.cluster != "subject" {
        return Err(CliError::Usage(format!("unsupported --cluster {}; only `subject` is available", a.cluster)));
    }
    let records = load(&a.data)?;
    let instrument = match a.iv {
        IvChoice::None => GretherInstrument::None,
        IvChoice::ActualPrior => GretherInstrument::ActualPrior,
    };
    let mut subsets = vec![("pooled".to_string(), GretherSubset::Pooled)];
    if a.by_accuracy {
        subsets.push(("accuracy_60".into(), GretherSubset::Accuracy(60)));
        subsets.push(("accuracy_80".into(), GretherSubset::Accuracy(80)));
    }
    let mut reports = Vec::new();
    for (name, subset) in subsets {
        let options = GretherOptions { instrument, fixed_effects: a.fe, subset };
        let est = grether_estimate(&records, options).map_err(|e| CliError::Data(format!("{name}: {e}")))?;
        reports.push(GretherReport::new(name, &est));
    }
    match a.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, &serde_json::json!({ "fits": reports })).map_err(io::Error::other)?;
            writeln!(out)?;
        }
        Format::Text => {
            for r in &reports {
                write_grether_text(out, r)?;
            }
        }
    }
    Ok(())
}

fn fmt_test(t: &TestResult) -> String {
    match t.df {
        Some((q, d)) => format!("F({q}, {d}) = {:.4}   p = {:.4e}", t.statistic, t.p_value),
        None => format!("stat = {:.4}   p = {:.4e}", t.statistic, t.p_value),
    }
}

fn write_grether_text(out: &mut dyn Write, r: &GretherReport) -> io::Result<()> {
    let method = match r.instrument {
        GretherInstrument::None => "OLS",
        GretherInstrument::ActualPrior => "2SLS, actual prior as instrument",
    };
    let fe = if r.fixed_effects { ", subject fixed effects" } else { "" };
    writeln!(out, "Grether regression [{}] ({method}{fe})", r.sample)?;
    writeln!(out, "  n = {}, clusters = {}", r.n, r.n_clusters.map_or("-".into(), |g| g.to_string()))?;
    writeln!(out, "  {:<16}{:>12}{:>12}", "", "estimate", "se")?;
    for c in &r.coefficients {
        writeln!(out, "  {:<16}{:>12.4}{:>12.4}", c.name, c.estimate, c.se)?;
    }
    for (name, e) in [
        ("alpha_low", r.alpha_low),
        ("beta_low", r.beta_low),
        ("alpha_high", r.alpha_high),
        ("beta_high", r.beta_high),
        ("alpha_gap", r.alpha_gap),
        ("beta_gap", r.beta_gap),
    ] {
        writeln!(out, "  {:<16}{:>12.4}{:>12.4}", name, e.estimate, e.se)?;
    }
    writeln!(out, "  Bayes (low):      {}", fmt_test(&r.bayes_low))?;
    writeln!(out, "  Bayes (high):     {}", fmt_test(&r.bayes_high))?;
    writeln!(out, "  equal treatments: {}", fmt_test(&r.equal_treatments))?;
    if let Some(f) = &r.first_stage_f {
        let values: Vec<String> = f.iter().map(|v| format!("{v:.2}")).collect();
        writeln!(out, "  first-stage F: {}", values.join(", "))?;
    }
    let d = r.drops;
    writeln!(
        out,
        "  dropped rows: {} non-main, {} undefined log ratio, {} undefined instrument, {} outside subset",
        d.non_main, d.undefined_log_ratio, d.undefined_instrument, d.outside_subset
    )?;
    writeln!(out)
}

#[derive(Debug, Default, Serialize)]
pub struct CalibrationCounts {
    pub treatment: Option<Treatment>,
    pub kind: Option<BeliefKind>,
    pub over: usize,
    pub neutral: usize,
    pub under: usize,
    /// Subjects with fewer than two reports.
    pub skipped: usize,
    pub mean_overconfidence: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TreatmentComparison {
    pub metric: Metric,
    pub n_subjects: usize,
    pub mean_difference: Option<f64>,
    pub test: TestResult,
}

#[derive(Debug, Serialize)]
pub struct MetricsReport {
    pub aggregation: AggregationMode,
    pub summary: MetricsSummary,
    pub calibration: Vec<CalibrationCounts>,
    pub comparisons: Vec<TreatmentComparison>,
}

const METRICS: [Metric; 5] =
    [Metric::OverUpdate, Metric::OverUpdateRatio, Metric::UpdateMagnitude, Metric::PriorConfidence, Metric::UpdateConfidence];

fn metric_name(metric: Metric) -> &'static str {
    match metric {
        Metric::OverUpdate => "over_update",
        Metric::OverUpdateRatio => "over_update_ratio",
        Metric::UpdateMagnitude => "update_magnitude",
        Metric::PriorConfidence => "prior_confidence",
        Metric::UpdateConfidence => "update_confidence",
    }
}

/// Writes `metric,treatment,subject_id,mean` rows, ascending by mean within
/// each metric and treatment.
pub fn write_subject_means<W: Write>(out: W, records: &[ResponseRecord], mode: AggregationMode) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "treatment", "subject_id", "mean"])?;
    for metric in METRICS {
        let means = subject_means(records, metric, mode);
        for t in Treatment::ALL {
            let mut rows: Vec<(&str, f64)> = means
                .iter()
                .filter_map(|m| Some((m.subject_id.as_str(), if t == Treatment::Low { m.low? } else { m.high? })))
                .collect();
            rows.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(b.0)));
            for (subject, mean) in rows {
                w.write_record([metric_name(metric), &t.to_string(), subject, &mean.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn metrics_report(records: &[ResponseRecord], group_by: GroupBy, mode: AggregationMode) -> MetricsReport {
    let summary = aggregate(records, group_by, mode);
    let mut by_subject: BTreeMap<&str, Vec<ResponseRecord>> = BTreeMap::new();
    for r in records {
        by_subject.entry(r.subject_id.as_str()).or_default().push(r.clone());
    }
    let mut calibration = Vec::new();
    for kind in [BeliefKind::Prior, BeliefKind::Update] {
        for t in Treatment::ALL {
            let mut counts = CalibrationCounts { treatment: Some(t), kind: Some(kind), ..Default::default() };
            let mut over = Vec::new();
            for rows in by_subject.values() {
                match subject_calibration(rows, kind, Some(t)) {
                    Ok(c) => {
                        over.push(c.continuous_overconfidence);
                        match c.classification {
                            Classification::Over => counts.over += 1,
                            Classification::Neutral => counts.neutral += 1,
                            Classification::Under => counts.under += 1,
                        }
                    }
                    Err(_) => counts.skipped += 1,
                }
            }
            counts.mean_overconfidence = (!over.is_empty()).then(|| over.iter().sum::<f64>() / over.len() as f64);
            calibration.push(counts);
        }
    }
    let comparisons = METRICS
    .into_iter()
    .map(|metric| {
        let pairs: Vec<(f64, f64)> = subject_means(records, metric, mode)
            .iter()
            .filter_map(|m| Some((m.low?, m.high?)))
            .collect();
        let diffs: Vec<f64> = pairs.iter().map(|(l, h)| h - l).collect();
        TreatmentComparison {
            metric,
            n_subjects: pairs.len(),
            mean_difference: (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64),
            test: wilcoxon_signed_rank(&pairs),
        }
    })
    .collect();
    MetricsReport { aggregation: mode, summary, calibration, comparisons }
}

fn metrics(a: &MetricsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mode = match (a.aggregation, a.seed) {
        (AggregationChoice::AllRows, _) => AggregationMode::AllRows,
        (AggregationChoice::OneDrawn, Some(seed)) => AggregationMode::OneDrawnPerTask { seed },
        (AggregationChoice::OneDrawn, None) => {
            return Err(CliError::Usage("--aggregation one-drawn needs --seed".into()));
        }
    };
    let group_by = match a.group_by {
        GroupChoice::Treatment => GroupBy::Treatment,
        GroupChoice::Prior => GroupBy::TreatmentPrior,
        GroupChoice::Accuracy => GroupBy::TreatmentAccuracy,
    };
    let records = load(&a.data)?;
    let report = metrics_report(&records, group_by, mode);
    if let Some(path) = &a.subject_means {
        write_subject_means(BufWriter::new(File::create(path)?), &records, mode).map_err(|e| CliError::Data(e.to_string()))?;
    }
    match a.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, &report).map_err(io::Error::other)?;
            writeln!(out)?;
        }
        Format::Text => write_metrics_text(out, &report, a.group_by)?,
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4}"))
}

fn write_metrics_text(out: &mut dyn Write, r: &MetricsReport, group: GroupChoice) -> io::Result<()> {
    let s = &r.summary;
    writeln!(out, "Over-updating ({} main rows)", s.n_main_rows)?;
    writeln!(out, "  dropped: {} degenerate-prior rows, {} unselected branches", s.dropped_degenerate, s.dropped_unselected)?;
    writeln!(
        out,
        "  over-update observations: {}; ratio observations: {} ({} undefined ratios dropped)",
        s.n_over_update, s.n_ratio, s.dropped_undefined_ratio
    )?;
    let level = match group {
        GroupChoice::Treatment => "",
        GroupChoice::Prior => "prior",
        GroupChoice::Accuracy => "accuracy",
    };
    writeln!(out, "  {:<10}{:>9}{:>8}{:>14}{:>9}{:>14}{:>12}", "treatment", level, "n", "over-update", "n ratio", "ratio", "magnitude")?;
    for g in &s.groups {
        writeln!(
            out,
            "  {:<10}{:>9}{:>8}{:>14.4}{:>9}{:>14}{:>12.4}",
            g.treatment.to_string(),
            g.level.map_or(String::new(), |l| l.to_string()),
            g.n_rows,
            g.mean_over_update,
            g.n_ratio,
            opt(g.mean_over_update_ratio),
            g.mean_update_magnitude
        )?;
    }
    writeln!(out, "\nCalibration (subjects by classification)")?;
    writeln!(out, "  {:<8}{:<10}{:>6}{:>9}{:>7}{:>9}{:>16}", "belief", "treatment", "over", "neutral", "under", "skipped", "overconfidence")?;
    for c in &r.calibration {
        let kind = match c.kind {
            Some(BeliefKind::Prior) => "prior",
            _ => "update",
        };
        writeln!(
            out,
            "  {:<8}{:<10}{:>6}{:>9}{:>7}{:>9}{:>16}",
            kind,
            c.treatment.map_or(String::new(), |t| t.to_string()),
            c.over,
            c.neutral,
            c.under,
            c.skipped,
            opt(c.mean_overconfidence)
        )?;
    }
    writeln!(out, "\nHigh vs Low (Wilcoxon signed-rank on subject means)")?;
    for c in &r.comparisons {
        writeln!(
            out,
            "  {:<20} n = {:<4} mean diff = {:>10}   W+ = {:<10} p = {:.4e}",
            metric_name(c.metric),
            c.n_subjects,
            opt(c.mean_difference),
            c.test.statistic,
            c.test.p_value
        )?;
    }
    Ok(())
}

fn verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let config = VerifyConfig { trials: a.trials, seed: a.seed, inject_negative_distortion: a.inject_negative_distortion };
    let reports: Vec<SuiteReport> = run_all(&config);
    match a.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, &reports).map_err(io::Error::other)?;
            writeln!(out)?;
        }
        Format::Text => {
            for r in &reports {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                writeln!(
                    out,
                    "{status} {:<28} trials {:>7}  checks {:>7}  max error {:.3e}  (tolerance {:.0e})",
                    r.name, r.trials, r.checks, r.max_error, r.tolerance
                )?;
                if let Some(v) = &r.first_violation {
                    writeln!(out, "     {} violation(s); first: {v}", r.violations)?;
                }
            }
        }
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(CliError::Verification(failed));
    }
    Ok(())
}

fn serve(a: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ip = a.host.parse().map_err(|_| CliError::Usage(format!("invalid --host {}", a.host)))?;
    let addr = SocketAddr::new(ip, a.port);
    let service = SessionService::new(a.data_dir.clone(), Arc::new(SystemClock))?;
    let app = http::router(Arc::new(service), a.static_dir.clone());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}
