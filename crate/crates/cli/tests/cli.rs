use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn kac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kac")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(dir: &Path, body: &str, out: &str) -> (Output, PathBuf) {
    let cfg = write_config(dir, &format!("{out}.conf"), body);
    let out = dir.join(out);
    let o = kac(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    (o, out)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

const SMALL_DECAY: &str = "kind = decay\nn = 24\nd = 3\nhorizon = 2\nsamples = 4\nreplicas = 3\nkmain_samples = 4\nseed = 5\n";

#[test]
fn identical_seed_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let (a, out_a) = run(dir.path(), SMALL_DECAY, "a");
    let (b, out_b) = run(dir.path(), SMALL_DECAY, "b");
    assert!(a.status.success() && b.status.success());
    for f in ["trajectory_0.csv", "trajectory_2.csv", "aggregate.csv"] {
        assert_eq!(fs::read(out_a.join(f)).unwrap(), fs::read(out_b.join(f)).unwrap(), "{f}");
    }
    let cfg = write_config(dir.path(), "c.conf", SMALL_DECAY);
    let out_c = dir.path().join("c");
    let c = kac(&["run", "--config", cfg.to_str().unwrap(), "--out", out_c.to_str().unwrap(), "--seed", "6"]);
    assert!(c.status.success());
    assert_ne!(fs::read(out_a.join("trajectory_0.csv")).unwrap(), fs::read(out_c.join("trajectory_0.csv")).unwrap());
}

#[test]
fn every_row_carries_replica_and_substream() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), SMALL_DECAY, "d");
    assert!(o.status.success());
    for r in 0..3 {
        let (header, rows) = read_csv(&out.join(format!("trajectory_{r}.csv")));
        assert_eq!(&header[..2], ["replica", "substream"]);
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|row| row[0] == r.to_string() && row[1] == r.to_string()));
        let dist = column(&header, &rows, "mean_sq_distance");
        assert!(dist.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
    let (header, rows) = read_csv(&out.join("aggregate.csv"));
    assert_eq!(&header[..2], ["replica", "substream"]);
    assert!(rows.iter().all(|row| row[0] == "all"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["results"]["replicas"], 3);
}

#[test]
fn numbers_round_trip() {
    let dir = TempDir::new().unwrap();
    let (_, out) = run(dir.path(), SMALL_DECAY, "e");
    let (header, rows) = read_csv(&out.join("trajectory_0.csv"));
    for cell in &rows[1][2..] {
        let x: f64 = cell.parse().unwrap();
        assert_eq!(format!("{x:.16e}"), *cell);
    }
    assert_eq!(header.len(), rows[1].len());
}

#[test]
fn zero_replicas_emit_only_the_envelope() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), &SMALL_DECAY.replace("replicas = 3", "replicas = 0"), "z");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("trajectory_0.csv").exists());
    let (header, rows) = read_csv(&out.join("aggregate.csv"));
    let env = column(&header, &rows, "envelope");
    assert!(env.iter().all(|e| e.is_finite() && *e > 0.0));
    assert!(env.windows(2).all(|w| w[1] <= w[0]));
    assert!(column(&header, &rows, "mean_sq_distance").iter().all(|x| x.is_nan()));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["results"]["constants"]["c_delta_n"].as_f64().unwrap() > 0.0);
}

#[test]
fn identical_copies_stay_at_zero_distance() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), &format!("{SMALL_DECAY}initial = copy\n"), "copy");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for r in 0..3 {
        let (header, rows) = read_csv(&out.join(format!("trajectory_{r}.csv")));
        assert!(column(&header, &rows, "mean_sq_distance").iter().all(|x| *x == 0.0));
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    for (i, body) in ["kind = decay\nd = 2\n", "kind = nonsense\n", "kind = decay\ncolour = red\n", "n = 3\n"].iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("bad{i}.conf"), body);
        assert_eq!(kac(&["validate", "--config", cfg.to_str().unwrap()]).status.code(), Some(2), "{body}");
        let out = dir.path().join(format!("bad{i}"));
        assert_eq!(kac(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(2));
    }
    let missing = dir.path().join("missing.conf");
    assert_eq!(kac(&["validate", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(kac(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn validate_prints_resolved_settings() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "ok.conf", "kind = decay\ndelta = 0.5\n");
    let o = kac(&["validate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 256);
    assert_eq!(v["p"], 4.0);
}

#[test]
fn failed_assertion_exits_1() {
    // M in decreasing order makes the creation column increase
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "kind = counterexample1\nm_values = 1000, 10\nmc_samples = 2000\n", "cx");
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn empty_inequality_sweep() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "kind = inequalities\ninstances = 0\n", "empty");
    assert!(o.status.success());
    let (_, rows) = read_csv(&out.join("aggregate.csv"));
    assert!(rows.is_empty());
}

#[test]
fn inequality_sweep_holds_and_flags_equality_cases() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "kind = inequalities\ninstances = 300\nn = 12\nseed = 9\n", "ineq");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let (header, rows) = read_csv(&out.join("aggregate.csv"));
    assert!(column(&header, &rows, "min_slack").iter().all(|s| *s >= -1e-10));
    let eq = column(&header, &rows, "equality_cases");
    let eq_slack = column(&header, &rows, "max_equality_abs_slack");
    for (n, s) in eq.iter().zip(&eq_slack) {
        if *n > 0.0 {
            assert!(*s <= 1e-10);
        }
    }
}

#[test]
fn support_studies() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "kind = counterexample1\nmc_samples = 4000\n", "c1");
    assert!(o.status.success());
    let (h, rows) = read_csv(&out.join("aggregate.csv"));
    let creation = column(&h, &rows, "creation");
    assert!(creation.windows(2).all(|w| w[1] < w[0]));

    let (o, out) = run(dir.path(), "kind = wishart\nn_values = 64, 512\nmc_samples = 1000\n", "w");
    assert!(o.status.success());
    let (h, rows) = read_csv(&out.join("aggregate.csv"));
    let est = column(&h, &rows, "estimate");
    assert!(est[0] < est[1] && est[1] < 2.0 / 3.0);
    assert_eq!(column(&h, &rows, "substream"), vec![0.0, 1.0]);

    let (o, out) = run(dir.path(), "kind = equilibrium-check\nn = 2048\nmc_samples = 200\n", "eq");
    assert!(o.status.success());
    let (h, rows) = read_csv(&out.join("aggregate.csv"));
    assert!((column(&h, &rows, "m4")[0] - 5.0 / 3.0).abs() < 0.01);

    let (o, _) = run(dir.path(), "kind = counterexample2\nr_minus_values = 2, 3\nmc_samples = 2000\n", "c2");
    assert!(o.status.success());
}
