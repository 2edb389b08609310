use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridcast_core::bench;
use gridcast_core::data::TimeSeries;
use gridcast_core::multistep::{HorizonEnsemble, HybridForecaster};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/household_power_20k.txt")
}

fn gridcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridcast"))
        .args(args)
        .env("GRIDCAST_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn ingest(dir: &Path) -> PathBuf {
    let series = dir.join("series.txt");
    let out = gridcast(&["ingest", "--input", s(&fixture()), "--out", s(&series)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    series
}

#[test]
fn ingest_writes_a_loadable_series() {
    let dir = tempfile::tempdir().unwrap();
    let series = TimeSeries::load(ingest(dir.path())).unwrap();
    assert_eq!(series.len(), 20_000);
    assert!(series.start_timestamp().is_some());
}

#[test]
fn train_then_forecast_prints_h_values() {
    let dir = tempfile::tempdir().unwrap();
    let series = ingest(dir.path());
    let model = dir.path().join("svr.ens");
    let out = gridcast(&[
        "train", "--method", "svr", "--window", "10", "--horizon", "4", "--train-size", "600",
        "--seed", "3", "--data", s(&series), "--out", s(&model),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ens = HorizonEnsemble::load(&model).unwrap();
    assert_eq!(ens.horizon(), 4);

    let out = gridcast(&["forecast", "--model", s(&model), "--data", s(&series), "--at", "1000"]);
    assert_eq!(code(&out), 0);
    let line = String::from_utf8(out.stdout).unwrap();
    let values: Vec<f64> = line.trim().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 4);

    let raw = TimeSeries::load(&series).unwrap();
    let expected = ens.forecast(&raw.values()[990..1000]).unwrap();
    assert_eq!(values, expected);
}

#[test]
fn hybrid_combines_saved_ensembles() {
    let dir = tempfile::tempdir().unwrap();
    let series = ingest(dir.path());
    let mut models = Vec::new();
    for (method, extra) in [("arma", vec![]), ("nar", vec!["--set", "hidden=4", "--set", "max_iters=5"])] {
        let path = dir.path().join(format!("{method}.ens"));
        let mut args = vec![
            "train", "--method", method, "--window", "10", "--horizon", "3", "--train-size", "500",
            "--data", s(&series), "--out", s(&path),
        ];
        args.extend(extra);
        let out = gridcast(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        models.push(path);
    }
    let validation = dir.path().join("validation.txt");
    TimeSeries::load(&series)
        .unwrap()
        .slice(500..700)
        .unwrap()
        .save(&validation)
        .unwrap();
    let hybrid = dir.path().join("hybrid.txt");
    let out = gridcast(&[
        "hybrid", "--models", s(&models[0]), s(&models[1]), "--validation", s(&validation), "--out", s(&hybrid),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let h = HybridForecaster::load(&hybrid).unwrap();
    assert_eq!(h.assignment().len(), 3);

    let out = gridcast(&["forecast", "--model", s(&hybrid), "--data", s(&series), "--at", "900"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim().split(',').count(), 3);
}

#[test]
fn bench_writes_report_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.conf");
    std::fs::write(
        &config,
        format!(
            "data = {}\nmethods = arma,svr\nwindow = 10\nhorizon = 3\ntrain_size = 600\ntest_size = 600\n",
            s(&fixture())
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = gridcast(&[
        "bench", "--config", s(&config), "--out-dir", s(&out_dir), "--abs-error-variance", "--set", "seed=5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let rows = bench::parse_csv(&csv).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(names, ["arma", "svr", "hybrid"]);
    for plot in ["mae.svg", "variance.svg"] {
        let svg = std::fs::read_to_string(out_dir.join(plot)).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    }
}

#[test]
fn usage_errors_exit_with_1() {
    assert_eq!(code(&gridcast(&["bogus"])), 1);
    assert_eq!(code(&gridcast(&["train", "--method", "svr"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let series = ingest(dir.path());
    let out = gridcast(&[
        "train", "--method", "svr", "--train-size", "100", "--data", s(&series), "--set", "bogus=1", "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn data_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridcast(&["ingest", "--input", "/no/such/file", "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&out), 2);
    let out = gridcast(&[
        "ingest", "--input", s(&fixture()), "--column", "Nope", "--out", s(&dir.path().join("x")),
    ]);
    assert_eq!(code(&out), 2);
    let series = ingest(dir.path());
    let out = gridcast(&[
        "train", "--method", "arma", "--train-size", "30000", "--data", s(&series), "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn training_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let series = ingest(dir.path());
    let out = gridcast(&[
        "train", "--method", "lstm", "--window", "5", "--horizon", "2", "--train-size", "300", "--data",
        s(&series), "--set", "cells=3", "--set", "epochs=2", "--set", "eta=1e300", "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
