use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stppfit_core::geom::{read_raster, write_raster, RasterField};

fn stppfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stppfit")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// Simulated default world with its generated run.json.
fn world(seed: u64) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    std::fs::write(&cfg, "{}").unwrap();
    let out = dir.path().join("world");
    let o = stppfit(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("expected count") && stdout.contains("realized count"));
    let run = out.join("run.json");
    (dir, run)
}

fn edit_run(run: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(run, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn missing_weather_file_exits_2_and_names_path() {
    let (_dir, run) = world(1);
    edit_run(&run, |v| v["weather"] = "no_such_weather.csv".into());
    let o = stppfit(&["importance", "--config", run.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_weather.csv"));
}

#[test]
fn usage_errors_exit_2() {
    let (_dir, run) = world(2);
    let cfg = run.to_str().unwrap();
    assert_eq!(code(&stppfit(&["diagnose", "--config", cfg, "--which", "variogram"])), 2);
    assert_eq!(code(&stppfit(&["frobnicate"])), 2);
    edit_run(&run, |v| {
        v.as_object_mut().unwrap().remove("seed");
    });
    let o = stppfit(&["fit", "--config", cfg]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn failed_type_is_reported_without_aborting_others() {
    let (_dir, run) = world(3);
    let events = run.parent().unwrap().join("events.csv");
    let text = std::fs::read_to_string(&events).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.ends_with(",4")).collect();
    std::fs::write(&events, kept.join("\n") + "\n").unwrap();
    edit_run(&run, |v| v["fit"] = serde_json::json!({"ranges": {"o1": [1, 2], "o2": [1, 1], "o3": [1, 1], "o4": [1, 1], "include_speed": false, "include_interaction": false}}));
    let o = stppfit(&["fit", "--config", run.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("type 4"));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.parent().unwrap().join("results/fit.json")).unwrap()).unwrap();
    let ks: Vec<u64> = fit["types"].as_array().unwrap().iter().map(|t| t["k"].as_u64().unwrap()).collect();
    assert_eq!(ks, [1, 2, 3]);
}

#[test]
fn fit_predict_diagnose_artifacts() {
    let (dir, run) = world(4);
    let wdir = run.parent().unwrap().to_path_buf();
    let results = wdir.join("results");

    // A pure-noise spatial covariate next to the densities.
    let h1 = read_raster(wdir.join("h1.asc")).unwrap();
    let noise = RasterField::from_values(
        h1.grid(),
        (0..h1.grid().n_cells()).map(|i| ((i * 7919) % 101) as f64).collect(),
    )
    .unwrap();
    write_raster(dir.path().join("noise.asc"), &noise).unwrap();
    edit_run(&run, |v| {
        v["importance"] = serde_json::json!({"n_trees": 200, "box_cells": 1, "covariates": [{"name": "noise", "raster": "../noise.asc"}]});
        v["fit"] = serde_json::json!({"ranges": {"o1": [1, 3], "o2": [1, 1], "o3": [1, 2], "o4": [1, 1], "include_speed": false, "include_interaction": false}});
        v["diagnose"] = serde_json::json!({"which": ["pcf", "envelope"], "n_sim": 19, "k_r": [500.0, 1000.0], "k_v": [5.0, 10.0]});
    });
    let cfg = run.to_str().unwrap();

    let o = stppfit(&["importance", "--config", cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let spatial = std::fs::read_to_string(results.join("importance_spatial_traditional.csv")).unwrap();
    let ranked: Vec<&str> = spatial.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ranked.last(), Some(&"noise"), "{spatial}");
    for name in ["spatial_conditional", "temporal_traditional", "temporal_conditional"] {
        assert!(results.join(format!("importance_{name}.csv")).exists());
    }

    let o = stppfit(&["fit", "--config", cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(results.join("fit_table.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().contains("(±"), "{table}");

    // Year by index, then a calendar range across 29 February.
    let o = stppfit(&["predict", "--config", cfg, "--from", "0", "--to", "364"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let year = csv_rows(&results.join("predict.csv"));
    assert_eq!(year.len(), 365);
    assert!(year.iter().all(|r| r[2] < r[1] && r[1] < r[3]));

    let o = stppfit(&["predict", "--config", cfg, "--from", "2004-02-28", "--to", "2004-03-01"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let leap = csv_rows(&results.join("predict.csv"));
    assert_eq!(leap.len(), 3);
    assert_eq!(leap[0], leap[1]);
    assert_eq!(leap[0], year[58]);
    assert_eq!(leap[2], year[59]);

    // Widest relative band on the most extreme wind-chill day.
    let weather = std::fs::read_to_string(wdir.join("weather.csv")).unwrap();
    let header: Vec<&str> = weather.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "wind_chill").unwrap();
    let chill: Vec<f64> = weather.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    let mean = chill.iter().sum::<f64>() / chill.len() as f64;
    let extreme = (0..365).max_by(|&a, &b| (chill[a] - mean).abs().total_cmp(&(chill[b] - mean).abs())).unwrap();
    let typical = (0..365).min_by(|&a, &b| (chill[a] - mean).abs().total_cmp(&(chill[b] - mean).abs())).unwrap();
    let ratio = |d: usize| year[d][3] / year[d][2];
    assert!(ratio(extreme) > ratio(typical), "day {extreme}: {} vs day {typical}: {}", ratio(extreme), ratio(typical));

    let o = stppfit(&["diagnose", "--config", cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sp = csv_rows(&results.join("pcf_spatial.csv"));
    let tp = csv_rows(&results.join("pcf_temporal.csv"));
    assert_eq!(sp.last().unwrap()[0], 10_000.0);
    assert_eq!(tp.last().unwrap()[0], 100.0);
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(results.join("envelope_verdict.json")).unwrap()).unwrap();
    assert!(verdict["inside"].is_boolean());
}
