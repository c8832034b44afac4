use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hdqkd::clickfile::{write_ss, write_tt};
use hdqkd::measurement::{simulate_model, SettingPlan, XY_PHASES};
use hdqkd::states::NoiseModelSpec;
use tempfile::tempdir;

fn hdqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdqkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn simulate_args(out: &str) -> Vec<&str> {
    vec![
        "simulate", "--d", "16", "--preset", "kh1", "--preset", "kh2", "--v-start", "0.9",
        "--v-stop", "1.0", "--v-steps", "11", "--no-timing", "--out", out,
    ]
}

#[test]
fn simulate_writes_one_row_per_point_and_is_byte_stable() {
    let a = tempdir().unwrap();
    let b = tempdir().unwrap();
    let pa = a.path().to_str().unwrap();
    let pb = b.path().to_str().unwrap();
    let ra = hdqkd(&simulate_args(pa));
    assert_eq!(code(&ra), 0, "{}", String::from_utf8_lossy(&ra.stderr));
    let rb = hdqkd(&[&["--jobs", "1"][..], &simulate_args(pb)].concat());
    assert_eq!(code(&rb), 0);

    let csv_a = fs::read(a.path().join("results.csv")).unwrap();
    let csv_b = fs::read(b.path().join("results.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "d,D,v,preset,p_guess_ub,hmin_bits,leak_bits,rate_bits,clamped_rate,wallclock_ms"
    );
    assert_eq!(lines.count(), 22);
    assert!(a.path().join("metadata.json").exists());
    assert!(a.path().join("plot_rates.py").exists());

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["rows"], 22);
    assert_eq!(meta["certificates_passed"], true);
}

#[test]
fn threshold_file_and_config_file() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"dims": [4], "sweep": {"start": 0.9, "stop": 1.0, "steps": 2},
            "threshold": {"enabled": true, "tol": 1e-3}, "plot": false, "timing": false}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let r = hdqkd(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let thresholds = fs::read_to_string(out.join("thresholds.csv")).unwrap();
    assert!(thresholds.starts_with("preset,d,D,threshold_v\n"));
    assert_eq!(thresholds.lines().count(), 2);
    assert!(!out.join("plot_rates.py").exists());
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // KH2 exists only for d = 16
    assert_eq!(code(&hdqkd(&["simulate", "--d", "8", "--preset", "kh2", "--out", out])), 1);
    assert_eq!(code(&hdqkd(&["simulate", "--v-start", "1.2", "--out", out])), 1);
    assert_eq!(code(&hdqkd(&["simulate", "--d", "10", "--block-size", "4", "--out", out])), 1);
    assert_eq!(code(&hdqkd(&["simulate", "--preset", "kh9", "--out", out])), 1);
    assert_eq!(code(&hdqkd(&["frobnicate"])), 1);
    assert_eq!(code(&hdqkd(&["rate", "--out", out])), 1);
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"dimz": [4]}"#).unwrap();
    assert_eq!(code(&hdqkd(&["--config", cfg.to_str().unwrap(), "simulate"])), 1);
    assert_eq!(code(&hdqkd(&["--help"])), 0);
}

fn write_tables(dir: &Path, d: usize, v: f64) -> (String, String) {
    let tables = simulate_model(&NoiseModelSpec::new(d, v).unwrap(), SettingPlan::CorrelatedBins, &XY_PHASES).unwrap();
    let tt = dir.join("tt.csv");
    let ss = dir.join("ss.csv");
    write_tt(&tables.tt, fs::File::create(&tt).unwrap()).unwrap();
    write_ss(&tables.ss, fs::File::create(&ss).unwrap()).unwrap();
    (tt.to_str().unwrap().to_owned(), ss.to_str().unwrap().to_owned())
}

#[test]
fn rate_from_files_matches_simulation() {
    let dir = tempdir().unwrap();
    let (tt, ss) = write_tables(dir.path(), 4, 0.95);
    let out_rate = dir.path().join("rate");
    let out_sim = dir.path().join("sim");
    let r = hdqkd(&["rate", "--tt", &tt, "--ss", &ss, "--no-timing", "--out", out_rate.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let s = hdqkd(&[
        "simulate", "--d", "4", "--v-start", "0.95", "--v-stop", "0.95", "--v-steps", "1", "--no-timing",
        "--out", out_sim.to_str().unwrap(),
    ]);
    assert_eq!(code(&s), 0);
    let field = |path: &Path, name: &str| -> f64 {
        let mut reader = csv::Reader::from_path(path.join("results.csv")).unwrap();
        let k = reader.headers().unwrap().iter().position(|h| h == name).unwrap();
        let row = reader.records().next().unwrap().unwrap();
        row[k].parse().unwrap()
    };
    for name in ["p_guess_ub", "leak_bits", "clamped_rate"] {
        let a = field(&out_rate, name);
        let b = field(&out_sim, name);
        assert!((a - b).abs() < 1e-9, "{name}: {a} vs {b}");
    }
}

#[test]
fn data_errors_exit_two() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("out");
    let tt = dir.path().join("tt.csv");
    fs::write(&tt, "i,j\n0,0\n").unwrap();
    let r = hdqkd(&["rate", "--tt", tt.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2, "{}", String::from_utf8_lossy(&r.stderr));
    fs::write(&tt, "i,j,value\n0,0,1\n0,1,-2\n1,0,0\n1,1,1\n").unwrap();
    let r = hdqkd(&["rate", "--tt", tt.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
    let input = dir.path().join("c.json");
    fs::write(&input, r#"{"diag": [1, 1, 1], "known": [[0, 1, 1.0], [1, 2, 1.0]], "intervals": [[0, 2, -1.0, -0.5]]}"#).unwrap();
    let r = hdqkd(&["completion", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
}

#[test]
fn oracle_passes_at_small_dimension() {
    let dir = tempdir().unwrap();
    let r = hdqkd(&[
        "oracle", "--d", "3", "--v", "0.8", "--v", "1.0", "--samples", "40", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8(r.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 2);
    let csv = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn completion_writes_intervals() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("c.json");
    fs::write(&input, r#"{"diag": [1, 1, 1], "known": [[0, 1, 0.9], [1, 2, 0.9]]}"#).unwrap();
    let r = hdqkd(&["completion", "--input", input.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("completion.json")).unwrap()).unwrap();
    let e = v["entries"].as_array().unwrap().iter().find(|e| e["j"] == 0 && e["l"] == 2).unwrap();
    // 0.81 - 0.19 and 0.81 + 0.19
    assert!((e["lo"].as_f64().unwrap() - 0.62).abs() < 1e-12);
    assert!((e["hi"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let csv = fs::read_to_string(dir.path().join("completion.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "j,l,lo,hi,status");
    assert_eq!(csv.lines().count(), 4);
}
