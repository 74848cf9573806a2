//! End-to-end tests of the `survtest` binary: exit codes, file outputs,
//! determinism across worker counts, and the train → nulltable → test
//! calibration loop.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use survtest_core::dist::DistSpec;
use survtest_core::io::write_sample_csv;
use survtest_core::rng::SplitMix64;
use survtest_core::survival::CensoredSample;

fn survtest(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survtest"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Draws an uncensored sample of size `n` from `law` and writes it as CSV.
fn write_fixture(path: &Path, law: &str, n: usize, seed: u64) {
    let law: DistSpec = law.parse().expect("valid law");
    let mut rng = SplitMix64::new(seed);
    let times: Vec<f64> = (0..n).map(|_| law.quantile(rng.next_open_f64()).unwrap()).collect();
    let flags = vec![0u8; n];
    let sample = CensoredSample::new(times, flags).expect("valid sample");
    write_sample_csv(path, &sample).expect("fixture written");
}

#[test]
fn identical_samples_accept_h0() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(&dir.path().join("a.csv"), "Exp(0,1)", 30, 1);
    fs::copy(dir.path().join("a.csv"), dir.path().join("b.csv")).unwrap();
    let out = survtest(dir.path(), &["test", "a.csv", "b.csv", "--method", "logrank"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("statistic: 0"), "{text}");
    assert!(text.contains("decision: accept_H0"), "{text}");
}

#[test]
fn separated_samples_reject_h0() {
    // Large samples from the two laws of a scale-shift pair: the log-rank
    // z-statistic is far from zero with this fixed seed.
    let dir = tempfile::tempdir().unwrap();
    write_fixture(&dir.path().join("a.csv"), "Exp(0,1)", 5000, 2);
    write_fixture(&dir.path().join("b.csv"), "Exp(0.1,1)", 5000, 3);
    let out = survtest(
        dir.path(),
        &["test", "a.csv", "b.csv", "--method", "logrank", "--alpha", "0.05"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("decision: reject_H0"));
}

#[test]
fn empirical_method_requires_table() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(&dir.path().join("a.csv"), "Exp(0,1)", 20, 4);
    fs::copy(dir.path().join("a.csv"), dir.path().join("b.csv")).unwrap();
    let out = survtest(dir.path(), &["test", "a.csv", "b.csv", "--method", "max_test"]);
    assert_eq!(out.status.code(), Some(9));
    assert!(stderr_of(&out).contains("table-required"));
}

#[test]
fn mismatched_table_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(&dir.path().join("a.csv"), "Exp(0,1)", 20, 5);
    fs::copy(dir.path().join("a.csv"), dir.path().join("b.csv")).unwrap();
    let build = survtest(
        dir.path(),
        &[
            "nulltable", "--method", "max_test", "--n", "20", "--rate", "0",
            "--replications", "1000", "--seed", "6", "--out", "nt.json",
        ],
    );
    assert_eq!(build.status.code(), Some(0), "{}", stderr_of(&build));
    let out = survtest(
        dir.path(),
        &["test", "a.csv", "b.csv", "--method", "min3", "--null-table", "nt.json"],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_of(&out).contains("invalid-input"));
}

#[test]
fn missing_sample_file_maps_to_io_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = survtest(dir.path(), &["test", "no.csv", "no.csv", "--method", "logrank"]);
    assert_eq!(out.status.code(), Some(15));
}

#[test]
fn generating_commands_demand_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = survtest(
        dir.path(),
        &["simulate", "--alternatives", "H01", "--replications", "2", "--out", "d.csv"],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_of(&out).contains("--seed"));
}

#[test]
fn simulate_is_reproducible_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let base: Vec<&str> = vec![
        "simulate", "--alternatives", "H01,H11", "--sizes", "20", "--rates", "0,0.3",
        "--replications", "5", "--seed", "99",
    ];
    let mut one = base.clone();
    one.extend(["--out", "one.csv", "--workers", "1"]);
    let mut four = base.clone();
    four.extend(["--out", "four.csv", "--workers", "4"]);
    assert_eq!(survtest(dir.path(), &one).status.code(), Some(0));
    assert_eq!(survtest(dir.path(), &four).status.code(), Some(0));
    let bytes_one = fs::read(dir.path().join("one.csv")).unwrap();
    let bytes_four = fs::read(dir.path().join("four.csv")).unwrap();
    assert_eq!(bytes_one, bytes_four);
    // Manifests agree apart from nothing: the grid omits the output path.
    let manifest_one = fs::read(dir.path().join("one.csv.manifest.json")).unwrap();
    let manifest_four = fs::read(dir.path().join("four.csv.manifest.json")).unwrap();
    assert_eq!(manifest_one, manifest_four);
}

#[test]
fn calibrate_reports_both_laws_of_a_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = survtest(dir.path(), &["calibrate", "--alt", "H01", "--rate", "0.3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert_eq!(text.lines().count(), 2);
    for line in text.lines() {
        assert!(line.contains("achieved_rate: 0.300000"), "{line}");
    }
}

#[test]
fn rank_reproduces_the_symmetric_case() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "method,alt,group,n,rate,alpha,power,replications\n\
               a,H01,I,20,0,0.05,0.9,100\n\
               a,H05,I,20,0,0.05,0.4,100\n\
               b,H01,I,20,0,0.05,0.5,100\n\
               b,H05,I,20,0,0.05,0.8,100\n";
    fs::write(dir.path().join("power.csv"), csv).unwrap();
    let out = survtest(
        dir.path(),
        &["rank", "--power", "power.csv", "--out", "rank.json"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("rank.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["command"], "rank");
    for entry in report["report"]["overall"].as_array().unwrap() {
        assert_eq!(entry["avg_rank"], 1.5);
        assert_eq!(entry["wald"], 2.0);
        assert_eq!(entry["savage"], 1.0);
    }
}

#[test]
fn train_embeds_config_and_manifest_hash() {
    let dir = tempfile::tempdir().unwrap();
    let simulate = survtest(
        dir.path(),
        &[
            "simulate", "--alternatives", "H01,H21", "--sizes", "20", "--rates", "0",
            "--replications", "10", "--seed", "42", "--out", "ds.csv",
        ],
    );
    assert_eq!(simulate.status.code(), Some(0), "{}", stderr_of(&simulate));
    let train = survtest(
        dir.path(),
        &[
            "train", "--dataset", "ds.csv", "--model-kind", "logreg", "--out", "model.json",
            "--holdout", "0.25", "--seed", "7",
        ],
    );
    assert_eq!(train.status.code(), Some(0), "{}", stderr_of(&train));
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert!(model["metadata"]["dataset_manifest_hash"].is_string());
    assert!(model["metadata"]["metrics"]["accuracy"]["value"].is_number());
    let meta: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("model.json.meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["command"], "train");
    assert_eq!(meta["args"]["holdout"], 0.25);
}

/// The full calibration loop: a model trained on simulated data, its null
/// table, and repeated tests on fresh H0 fixtures reject at roughly α.
#[test]
fn trained_model_is_calibrated_on_h0_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let simulate = survtest(
        dir.path(),
        &[
            "simulate", "--alternatives", "all", "--sizes", "20", "--rates", "0",
            "--replications", "8", "--seed", "2024", "--out", "ds.csv",
        ],
    );
    assert_eq!(simulate.status.code(), Some(0), "{}", stderr_of(&simulate));
    let train = survtest(
        dir.path(),
        &["train", "--dataset", "ds.csv", "--model-kind", "logreg", "--out", "model.json"],
    );
    assert_eq!(train.status.code(), Some(0), "{}", stderr_of(&train));
    let table = survtest(
        dir.path(),
        &[
            "nulltable", "--model", "model.json", "--n", "20", "--rate", "0",
            "--replications", "1999", "--seed", "2025", "--out", "mnt.json",
        ],
    );
    assert_eq!(table.status.code(), Some(0), "{}", stderr_of(&table));

    let alpha = 0.2;
    let trials: u32 = 200;
    let mut rejections: u32 = 0;
    for trial in 0..trials {
        let a = dir.path().join(format!("h0_a_{trial}.csv"));
        let b = dir.path().join(format!("h0_b_{trial}.csv"));
        write_fixture(&a, "Exp(0,1)", 20, 10_000 + 2 * u64::from(trial));
        write_fixture(&b, "Exp(0,1)", 20, 10_001 + 2 * u64::from(trial));
        let out = survtest(
            dir.path(),
            &[
                "test",
                a.to_str().unwrap(),
                b.to_str().unwrap(),
                "--model", "model.json",
                "--null-table", "mnt.json",
                "--alpha", "0.2",
            ],
        );
        match out.status.code() {
            Some(0) => {}
            Some(3) => rejections += 1,
            other => panic!("unexpected exit {other:?}: {}", stderr_of(&out)),
        }
    }
    // Binomial(200, 0.2): ±3σ is ±17 rejections around 40.
    let rate = f64::from(rejections) / f64::from(trials);
    assert!(
        (rate - alpha).abs() < 3.0 * (alpha * (1.0 - alpha) / f64::from(trials)).sqrt(),
        "H0 rejection rate {rate} far from alpha {alpha}"
    );
}

#[test]
fn power_dataset_mode_writes_table_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let simulate = survtest(
        dir.path(),
        &[
            "simulate", "--alternatives", "H01,H21", "--sizes", "20", "--rates", "0",
            "--replications", "10", "--seed", "42", "--out", "ds.csv",
        ],
    );
    assert_eq!(simulate.status.code(), Some(0), "{}", stderr_of(&simulate));
    let power = survtest(
        dir.path(),
        &[
            "power", "--dataset", "ds.csv", "--methods", "logrank,gehan",
            "--alphas", "0.05,0.1", "--out", "power.csv",
        ],
    );
    assert_eq!(power.status.code(), Some(0), "{}", stderr_of(&power));
    let table = fs::read_to_string(dir.path().join("power.csv")).unwrap();
    // Header + 2 methods × 2 alternatives × 2 alphas.
    assert_eq!(table.lines().count(), 9);
    let meta: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("power.csv.meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["command"], "power");

    let rank = survtest(dir.path(), &["rank", "--power", "power.csv"]);
    assert_eq!(rank.status.code(), Some(0), "{}", stderr_of(&rank));
    assert!(stdout_of(&rank).contains("avg_rank"));
}

#[test]
fn envelope_writes_report_and_plot_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = survtest(
        dir.path(),
        &[
            "envelope", "--method", "max_test",
            "--cell", "Exp(0,1):20:0", "--cell", "We(0,2,0.5):20:0",
            "--replications", "1000", "--seed", "31", "--out", "env.json",
            "--plot-csv", "env.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("env.json")).unwrap()).unwrap();
    assert_eq!(report["statistic"], "max_test");
    assert_eq!(report["cells"].as_array().unwrap().len(), 2);
    let plot = fs::read_to_string(dir.path().join("env.csv")).unwrap();
    assert!(plot.starts_with("statistic_value,g_min,g_avg,g_max"));
}

fn file_nonempty(path: PathBuf) -> bool {
    fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false)
}

#[test]
fn importance_runs_on_a_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let simulate = survtest(
        dir.path(),
        &[
            "simulate", "--alternatives", "H01,H21", "--sizes", "20", "--rates", "0",
            "--replications", "10", "--seed", "42", "--out", "ds.csv",
        ],
    );
    assert_eq!(simulate.status.code(), Some(0), "{}", stderr_of(&simulate));
    let train = survtest(
        dir.path(),
        &["train", "--dataset", "ds.csv", "--model-kind", "gbt", "--out", "model.json"],
    );
    assert_eq!(train.status.code(), Some(0), "{}", stderr_of(&train));
    let out = survtest(
        dir.path(),
        &[
            "importance", "--model", "model.json", "--dataset", "ds.csv",
            "--repeats", "3", "--seed", "1", "--out", "imp.json",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(file_nonempty(dir.path().join("imp.json")));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("imp.json")).unwrap()).unwrap();
    assert_eq!(report["importances"].as_array().unwrap().len(), 21);
}
