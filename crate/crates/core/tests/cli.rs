use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_innovguard");

const SMALL_SUITE: &str = r#"
[feeder]
duration = 1.5
sample_rate = 10000.0
fundamental_freq = 60.0
sensor_noise_frac = 0.005

[feeder.sdg]
kind = "ar_gaussian"
ar_coeffs = [0.999]
noise_std = 0.6
mean_power = 30.0

[[feeder.relays]]
name = "R1"
base_envelope = 100.0
sdg_coupling = 0.3

[[feeder.relays]]
name = "R2"
base_envelope = 100.0
sdg_coupling = 0.3

[[cases]]
name = "F1"
onset = 1.2

[[cases.relays]]
name = "R2"
role = "primary"

[[cases.relays]]
name = "R1"
role = "backup"
"#;

const SMALL_CONFIG: &str = r#"
[experiment]
scenario = "suite.toml"
n_runs = 100
window_seconds = 0.25
block_len = 167
aocr_avg_window = 1.0
grid_points = 100
ar_order = 16

[compression]
harmonics = 3
"#;

fn setup() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("suite.toml"), SMALL_SUITE).unwrap();
    let cfg = dir.path().join("config.toml");
    std::fs::write(&cfg, SMALL_CONFIG).unwrap();
    (dir, cfg)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn run_with(cfg: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--config", cfg.to_str().unwrap()];
    all.extend_from_slice(args);
    let out = Command::new(BIN).args(&all[..1]).args(&all[1..]).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn version_and_help_exit_zero() {
    let out = run(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), format!("innovguard {}", env!("CARGO_PKG_VERSION")));
    assert_eq!(run(&["detect", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["detect", "--input", "x.csv"]).status.code(), Some(2));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[experiment]\nn_runs = 10\nunknown_key = 1\n").unwrap();
    let out = run(&["simulate", "--config", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_key"));

    std::fs::write(&bad, "[experiment]\ntarget_fpr = 1.5\n").unwrap();
    assert_eq!(run(&["calibrate", "--config", p(&bad)]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = run(&["detect", "--model", p(&missing), "--input", p(&missing)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    let junk = dir.path().join("junk.cpw");
    std::fs::write(&junk, b"not a blob").unwrap();
    assert_eq!(run(&["decompress", "--input", p(&junk)]).status.code(), Some(3));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let (dir, cfg) = setup();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    run_with(&cfg, &["simulate", "--case", "F1", "--seed", "5", "--out", p(&a)]);
    run_with(&cfg, &["simulate", "--case", "F1", "--seed", "5", "--out", p(&b)]);
    run_with(&cfg, &["simulate", "--case", "F1", "--seed", "6", "--out", p(&c)]);
    for relay in ["R1", "R2"] {
        let ra = std::fs::read(a.join(format!("{relay}.csv"))).unwrap();
        let rb = std::fs::read(b.join(format!("{relay}.csv"))).unwrap();
        let rc = std::fs::read(c.join(format!("{relay}.csv"))).unwrap();
        assert_eq!(ra, rb);
        assert_ne!(ra, rc);
    }
    let header = std::fs::read_to_string(a.join("R1.csv")).unwrap();
    assert_eq!(header.lines().next(), Some("time_s,current_a"));
    assert_eq!(header.lines().count(), 15_001);
    assert!(a.join("scenario.toml").exists());
}

#[test]
fn train_then_detect_quiet_and_faulted() {
    let (dir, cfg) = setup();
    let quiet = dir.path().join("quiet");
    let fault = dir.path().join("fault");
    run_with(&cfg, &["simulate", "--seed", "1", "--out", p(&quiet)]);
    run_with(&cfg, &["simulate", "--case", "F1", "--seed", "2", "--out", p(&fault)]);
    let model = dir.path().join("model.json");
    run_with(&cfg, &["train", "--input", p(&quiet.join("R2.csv")), "--out", p(&model)]);

    let detect = |csv: &Path, start: &str| -> serde_json::Value {
        let out = run_with(&cfg, &["detect", "--model", p(&model), "--input", p(csv), "--start", start]);
        serde_json::from_slice(&out.stdout).unwrap()
    };
    let h0 = detect(&fault.join("R2.csv"), "0.5");
    assert_eq!(h0["decision"], "H0");
    assert_eq!(h0["samples_consumed"], 680);
    assert!(h0["delay_seconds"].is_null());
    let h1 = detect(&fault.join("R2.csv"), "1.2");
    assert_eq!(h1["decision"], "H1");
    assert_eq!(h1["samples_consumed"], 85);
    assert_eq!(h1["statistic_trace"][0]["N"], 85);
}

#[test]
fn evaluate_writes_report_and_plot_data() {
    let (dir, cfg) = setup();
    let out = dir.path().join("eval");
    run_with(&cfg, &["evaluate", "--out", p(&out), "--seed", "3"]);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("case,relay,role,method,tpr,fpr,mean_delay_s,tp,fp,tn,fn"));
    // Two affected relays times three methods.
    assert_eq!(lines.count(), 6);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report["completed_runs"], 100);
    for row in report["rows"].as_array().unwrap() {
        let c = &row["counts"];
        let n = |k: &str| c[k].as_u64().unwrap();
        assert_eq!(n("tp") + n("fn"), 100);
        assert_eq!(n("fp") + n("tn"), 100);
    }
    for relay in ["R1", "R2"] {
        let hist = std::fs::read_to_string(out.join(format!("innovation_hist_{relay}.csv"))).unwrap();
        assert_eq!(hist.lines().next(), Some("condition,bin_left,bin_right,count"));
        for m in ["isfd", "conventional", "aocr"] {
            let sc = std::fs::read_to_string(out.join(format!("stats_scatter_{relay}_{m}.csv"))).unwrap();
            assert_eq!(sc.lines().next(), Some("run,condition,statistic,threshold"));
            // No-fault plus one faulted condition per run.
            assert_eq!(sc.lines().count(), 1 + 200);
        }
    }

    // Same seed, same bytes.
    let again = dir.path().join("again");
    run_with(&cfg, &["evaluate", "--out", p(&again), "--seed", "3"]);
    assert_eq!(csv, std::fs::read_to_string(again.join("metrics.csv")).unwrap());
}

#[test]
fn calibrate_writes_one_entry_per_relay_and_baseline() {
    let (dir, cfg) = setup();
    let out = dir.path().join("cal");
    run_with(&cfg, &["calibrate", "--out", p(&out)]);
    let cal: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap();
    let entries = cal.as_array().unwrap();
    assert_eq!(entries.len(), 4);
    for e in entries {
        assert!(e["achieved_fpr"].as_f64().unwrap() <= 0.05);
    }
}

#[test]
fn compress_and_decompress_round_trip() {
    let (dir, cfg) = setup();
    let sim = dir.path().join("sim");
    run_with(&cfg, &["simulate", "--seed", "4", "--out", p(&sim)]);
    let input = sim.join("R1.csv");
    let blob = dir.path().join("r1.cpw");
    let out = run_with(&cfg, &["compress", "--input", p(&input), "--out", p(&blob)]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["mse_over_target"].as_f64().unwrap() <= 1.15);
    assert_eq!(&std::fs::read(&blob).unwrap()[..4], b"CPW1");

    let back = dir.path().join("r1_back.csv");
    let out = run_with(&cfg, &["decompress", "--input", p(&blob), "--reference", p(&input), "--out", p(&back)]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["samples"], 15_000);
    assert!(summary["mse_over_target"].as_f64().unwrap() <= 1.15);
}
