use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use belieflab::schema;

fn belieflab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_belieflab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    assert_eq!(o.status.code(), Some(0), "{}", stderr(o));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn simulate(path: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--subjects", "40", "--seed", "12", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = belieflab(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn exact_bayesian_reports_have_zero_over_updating() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bayes.csv");
    simulate(&data, &["--model", "bayes", "--sigma-low", "0", "--report", "exact"]);
    let records = schema::read_records(std::fs::File::open(&data).unwrap()).unwrap();
    assert_eq!(records.len(), 40 * 42);

    let report = json(&belieflab(&["metrics", "--data", data.to_str().unwrap(), "--format", "json"]));
    assert_eq!(report["summary"]["n_main_rows"], 40 * 42);
    assert_eq!(report["summary"]["dropped_degenerate"], 80);
    for g in report["summary"]["groups"].as_array().unwrap() {
        assert!(g["mean_over_update"].as_f64().unwrap().abs() < 1e-9, "{g}");
    }
}

#[test]
fn simulate_estimate_metrics_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("grether.csv");
    simulate(
        &data,
        &["--model", "grether", "--alpha", "0.5", "--beta", "0.8", "--alpha-high", "0.3", "--beta-high", "0.9", "--sigma-low", "0", "--report", "exact"],
    );

    let fit = json(&belieflab(&["estimate", "--data", data.to_str().unwrap(), "--format", "json", "--by-accuracy"]));
    let fits = fit["fits"].as_array().unwrap();
    assert_eq!(fits.len(), 3);
    let pooled = &fits[0];
    for (key, truth) in [("alpha_low", 0.5), ("beta_low", 0.8), ("alpha_high", 0.3), ("beta_high", 0.9)] {
        let got = pooled[key]["estimate"].as_f64().unwrap();
        assert!((got - truth).abs() < 1e-8, "{key}: {got}");
    }
    assert!(pooled["bayes_low"]["p_value"].as_f64().unwrap() < 1e-6);

    let iv = json(&belieflab(&["estimate", "--data", data.to_str().unwrap(), "--iv", "actual-prior", "--fe", "--format", "json"]));
    assert_eq!(iv["fits"][0]["instrument"], "actual_prior");
    assert!(iv["fits"][0]["first_stage_f"].is_array());

    let text = belieflab(&["estimate", "--data", data.to_str().unwrap()]);
    assert_eq!(text.status.code(), Some(0));
    assert!(stdout(&text).contains("alpha_gap"));

    for group in ["treatment", "prior", "accuracy"] {
        let o = belieflab(&["metrics", "--data", data.to_str().unwrap(), "--group-by", group]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("Wilcoxon"));
    }
    let one = json(&belieflab(&["metrics", "--data", data.to_str().unwrap(), "--aggregation", "one-drawn", "--seed", "3", "--format", "json"]));
    // One of the two branches of each of the 20 non-degenerate tasks.
    assert_eq!(one["summary"]["dropped_unselected"], 40 * 20);
}

#[test]
fn bayesian_data_estimates_to_bayes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bayes.csv");
    let o = belieflab(&["simulate", "--subjects", "10", "--model", "bayes", "--sigma-low", "0", "--report", "exact", "--seed", "1", "--out", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let fit = json(&belieflab(&["estimate", "--data", data.to_str().unwrap(), "--format", "json"]));
    let pooled = &fit["fits"][0];
    for key in ["alpha_low", "beta_low", "alpha_high", "beta_high"] {
        assert!((pooled[key]["estimate"].as_f64().unwrap() - 1.0).abs() < 1e-10, "{key}");
    }
    for test in ["bayes_low", "bayes_high"] {
        assert_eq!(pooled[test]["p_value"].as_f64(), Some(1.0));
    }
}

#[test]
fn wilcoxon_detects_a_grether_treatment_gap() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("gap.csv");
    let means = dir.path().join("means.csv");
    let o = belieflab(&[
        "simulate", "--subjects", "200", "--model", "grether", "--alpha", "0.349", "--beta", "0.763", "--alpha-high", "0.238",
        "--beta-high", "0.876", "--seed", "4", "--out", data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let report = json(&belieflab(&[
        "metrics", "--data", data.to_str().unwrap(), "--format", "json", "--subject-means", means.to_str().unwrap(),
    ]));
    let over = report["comparisons"].as_array().unwrap().iter().find(|c| c["metric"] == "over_update").unwrap();
    assert_eq!(over["n_subjects"], 200);
    assert!(over["test"]["p_value"].as_f64().unwrap() < 0.05, "{over}");
    assert!(over["mean_difference"].as_f64().unwrap() < 0.0);

    // Long CSV, ascending within each metric and treatment.
    let mut reader = csv::Reader::from_path(&means).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["metric", "treatment", "subject_id", "mean"]);
    let rows: Vec<(String, String, f64)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[1].to_string(), r[3].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().filter(|r| r.0 == "over_update").count(), 400);
    for w in rows.windows(2) {
        if (&w[0].0, &w[0].1) == (&w[1].0, &w[1].1) {
            assert!(w[0].2 <= w[1].2);
        }
    }
}

#[test]
fn simulation_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    simulate(&a, &["--report-noise", "0.3"]);
    simulate(&b, &["--report-noise", "0.3"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let piped = belieflab(&["simulate", "--subjects", "40", "--seed", "12", "--report-noise", "0.3"]);
    assert_eq!(piped.stdout, std::fs::read(&a).unwrap());
}

#[test]
fn usage_errors_exit_with_one() {
    let o = belieflab(&["simulate", "--subjects", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--seed"));
    assert_eq!(belieflab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(belieflab(&["simulate", "--seed", "1", "--model", "grether", "--beta", "-1"]).status.code(), Some(1));
    assert_eq!(belieflab(&["simulate", "--seed", "1", "--sigma-low", "-2"]).status.code(), Some(1));
    assert_eq!(belieflab(&["metrics", "--data", "x.csv", "--aggregation", "one-drawn"]).status.code(), Some(1));
    assert_eq!(belieflab(&["estimate", "--data", "x.csv", "--cluster", "task"]).status.code(), Some(1));
    let help = belieflab(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("simulate"));
}

#[test]
fn data_errors_exit_with_two_and_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ok.csv");
    simulate(&data, &[]);
    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    lines[3] = lines[3].replacen(",low,", ",medium,", 1);
    let broken = dir.path().join("broken.csv");
    std::fs::write(&broken, lines.join("\n")).unwrap();

    for cmd in ["estimate", "metrics"] {
        let o = belieflab(&[cmd, "--data", broken.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        let msg = stderr(&o);
        assert!(msg.contains("row 3") && msg.contains("treatment"), "{msg}");
    }
    let o = belieflab(&["metrics", "--data", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let out_of_range = dir.path().join("range.csv");
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let mut fields: Vec<&str> = lines[1].split(',').collect();
    fields[4] = "140";
    lines[1] = fields.join(",");
    std::fs::write(&out_of_range, lines.join("\n")).unwrap();
    let o = belieflab(&["estimate", "--data", out_of_range.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 1"), "{}", stderr(&o));
}

#[test]
fn verify_passes_and_reports_injected_violations() {
    let o = belieflab(&["verify", "--trials", "300", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).lines().all(|l| !l.starts_with("FAIL")));

    let bad = belieflab(&["verify", "--trials", "300", "--inject-negative-distortion"]);
    assert_eq!(bad.status.code(), Some(3), "{}", stdout(&bad));
    assert!(stdout(&bad).contains("FAIL"));

    let reports = json(&belieflab(&["verify", "--trials", "50", "--format", "json"]));
    assert!(reports.as_array().unwrap().len() >= 3);
}

#[tokio::test]
async fn serve_listens_and_answers() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = std::process::Command::new(env!("CARGO_BIN_EXE_belieflab"))
        .args(["serve", "--port", "0"])
        .env("BELIEFLAB_DATA_DIR", dir.path())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let base = line.trim().strip_prefix("listening on ").expect(&line).to_string();

    let client = reqwest::Client::new();
    let health = client.get(format!("{base}/health")).send().await.unwrap();
    assert_eq!(health.status(), 200);
    let created: serde_json::Value = client.post(format!("{base}/sessions")).send().await.unwrap().json().await.unwrap();
    let id = created["session_id"].as_str().unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(dir.path().join(format!("{id}.jsonl")).exists());
}
