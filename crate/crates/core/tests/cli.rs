use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use subspace_forecast::fixtures;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_subspace-forecast"));
    cmd.env("SUBSPACE_FORECAST_LOG", "quiet");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_series(dir: &Path, len: usize, seed: u64) -> PathBuf {
    let series = fixtures::price_series("GE", len, seed);
    let mut text = String::from("date,close\n");
    for (d, p) in series.dates().iter().zip(series.prices()) {
        text.push_str(&format!("{d},{p}\n"));
    }
    let path = dir.join("ge.csv");
    fs::write(&path, text).unwrap();
    path
}

/// `(day, forecast, std)` rows of a forecast table.
fn table(out: &str) -> Vec<(usize, f64, f64)> {
    out.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("day"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn forecast_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_series(dir.path(), 1500, 1);
    let o = run(&["forecast", "--csv", csv.to_str().unwrap(), "--m", "20", "--h", "10", "--method", "rd", "--cap", "1e4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("# RD L="), "{out}");
    let rows = table(&out);
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
    assert!(rows.iter().all(|r| r.1 > 0.0 && r.2 >= 0.0));
}

#[test]
fn unconditional_forecast_is_mean_path() {
    use subspace_forecast::pipeline::{build_hankel, normalize_and_center, WindowConfig};
    let dir = tempfile::tempdir().unwrap();
    let csv = write_series(dir.path(), 600, 2);
    let o = run(&["forecast", "--csv", csv.to_str().unwrap(), "--m", "15", "--h", "5", "--method", "unc"]);
    assert!(o.status.success());
    let rows = table(&stdout(&o));

    let prices = fixtures::price_series("GE", 600, 2).prices().to_vec();
    let cfg = WindowConfig::with_horizon(15, 5).unwrap();
    let x = normalize_and_center(&build_hankel(&prices, 20, 581).unwrap(), cfg).unwrap();
    let last = prices[599];
    for (j, r) in rows.iter().enumerate() {
        let expected = x.mean()[14 + j] * last;
        assert!((r.1 - expected).abs() <= 1e-12 * expected, "{} vs {expected}", r.1);
    }
}

#[test]
fn rd_at_full_subspace_matches_gb() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_series(dir.path(), 1500, 3);
    let csv = csv.to_str().unwrap();
    let gb = table(&stdout(&run(&["forecast", "--csv", csv, "--m", "20", "--method", "gb"])));
    let rd = run(&["forecast", "--csv", csv, "--m", "20", "--method", "rd", "--cap", "1e12", "--l", "19"]);
    assert!(rd.status.success());
    let rd = table(&stdout(&rd));
    for (a, b) in gb.iter().zip(&rd) {
        assert!((a.1 - b.1).abs() <= 1e-6 * a.1.abs());
        assert!((a.2 - b.2).abs() <= 1e-6 * a.2.abs());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_series(dir.path(), 400, 4);
    let csv = csv.to_str().unwrap();
    // usage
    assert_eq!(run(&["forecast", "--csv", csv]).status.code(), Some(1));
    assert_eq!(run(&["sweep", "--csv", csv, "--caps", "0.5"]).status.code(), Some(1));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    // data
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "date,close\n2020-01-01,abc\n").unwrap();
    assert_eq!(run(&["forecast", "--csv", bad.to_str().unwrap(), "--m", "5"]).status.code(), Some(2));
    assert_eq!(run(&["forecast", "--csv", csv, "--m", "395"]).status.code(), Some(2));
    // numerical: pinned subspace too ill-conditioned for the cap
    assert_eq!(
        run(&["forecast", "--csv", csv, "--m", "40", "--method", "rd", "--l", "39", "--cap", "2"]).status.code(),
        Some(3)
    );
}

#[test]
fn sweep_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_series(dir.path(), 100, 5);
    let csv = csv.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["sweep", "--csv", csv, "--m-list", "20", "--n-test", "5", "--caps", "1e3", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout(&o).lines().count(), 1);
    }
    let best = fs::read_to_string(a.join("best_mse.csv")).unwrap();
    assert_eq!(best.lines().count(), 2);
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn backtest_single_m() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_series(dir.path(), 400, 6);
    let o = run(&["backtest", "--csv", csv.to_str().unwrap(), "--m", "30", "--n-test", "50"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().all(|l| l.starts_with("M=30 cap=")));
}

#[test]
fn logging_reports_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_series(dir.path(), 300, 7);
    let o = bin()
        .env("SUBSPACE_FORECAST_LOG", "info")
        .args(["backtest", "--csv", csv.to_str().unwrap(), "--m", "20", "--n-test", "20"])
        .output()
        .unwrap();
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("\"n_test\":20") && err.contains("\"caps\":[1000.0,10000.0]") && err.contains("\"h\":10"), "{err}");
}

#[test]
fn verify_small_n_is_advisory() {
    let o = run(&["verify", "--n", "10"]);
    let out = stdout(&o);
    assert!(out.contains("insufficient samples"), "{out}");
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn verify_negative_control_fails_ordering() {
    let o = run(&["verify", "--inject-fault", "zero-gb"]);
    assert_eq!(o.status.code(), Some(3));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("FAIL") && l.contains("order/GB<=RD")), "{out}");
}

#[test]
fn verify_is_reproducible_per_seed() {
    let a = stdout(&run(&["verify", "--seed", "17", "--n", "20000"]));
    let b = stdout(&run(&["verify", "--seed", "17", "--n", "20000"]));
    let c = stdout(&run(&["verify", "--seed", "18", "--n", "20000"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
}
