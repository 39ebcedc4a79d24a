use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pcvcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcvcm")).args(args).env_remove("PCVCM_OUT_DIR").output().expect("spawn pcvcm")
}

fn ok_json(args: &[&str]) -> Value {
    let out = pcvcm(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json stdout")
}

fn csv_rows(bytes: &[u8]) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_reader(bytes);
    let header = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| if v == "inf" { f64::INFINITY } else { v.parse().unwrap() }).collect())
        .collect();
    (header, rows)
}

fn trapezoid(rows: &[Vec<f64>]) -> f64 {
    rows.windows(2).map(|w| 0.5 * (w[1][0] - w[0][0]) * (w[0][1] + w[1][1])).sum()
}

#[test]
fn scale_infeasible_exits_two_with_json_error() {
    let out = pcvcm(&["scale", "--family", "exch", "--U", "0.75", "--a", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"], "infeasible: a <= sqrt(1-U)");
    assert_eq!(v["feasible"], false);
}

#[test]
fn scale_rw_example() {
    let v = ok_json(&["scale", "--family", "rw", "--U", "0.968", "--a", "0.01"]);
    let theta = v["rates"]["theta"].as_f64().unwrap();
    assert!((theta - 4.758).abs() < 1e-3, "{theta}");
    assert_eq!(v["feasible"], true);
    assert!(v["residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn scale_matern_example() {
    let v = ok_json(&["scale", "--family", "matern", "--U", "2", "--a", "0.5", "--U-tau", "0.3226", "--a-tau", "0.01"]);
    assert!((v["rates"]["lambda_phi"].as_f64().unwrap() - 1.3863).abs() < 1e-4);
    assert!((v["rates"]["lambda_tau"].as_f64().unwrap() - 14.276).abs() < 1e-3);
}

#[test]
fn scale_usage_error_exits_one() {
    assert_eq!(pcvcm(&["scale", "--family", "matern", "--U", "2", "--a", "0.5"]).status.code(), Some(1));
    assert_eq!(pcvcm(&["scale", "--family", "nope", "--U", "2", "--a", "0.5"]).status.code(), Some(1));
    assert_eq!(pcvcm(&["--help"]).status.code(), Some(0));
}

#[test]
fn density_distance_scale_is_decreasing_and_integrates() {
    let out = pcvcm(&["density", "--family", "ar1", "--U", "0.5", "--a", "0.75", "--scale", "distance"]);
    assert!(out.status.success());
    let (header, rows) = csv_rows(&out.stdout);
    assert_eq!(header, ["distance", "density", "cdf"]);
    assert_eq!(rows.len(), 1000);
    assert_eq!(rows[0][0], 0.0);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
    assert!((trapezoid(&rows) - 1.0).abs() < 1e-4);
    // the resolved configuration goes to stderr when the CSV goes to stdout
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"theta\""));
}

#[test]
fn density_param_scale_matches_cdf() {
    // the AR1 density is singular at rho = 1, so the trapezoid is compared
    // with the CDF over the interior
    let out = pcvcm(&[
        "density", "--family", "ar1", "--U", "0.5", "--a", "0.75", "--grid-start", "-1", "--grid-end", "0.9",
        "--grid-points", "1000",
    ]);
    assert!(out.status.success());
    let (header, rows) = csv_rows(&out.stdout);
    assert_eq!(header, ["value", "density", "cdf"]);
    let cdf = rows.last().unwrap()[2] - rows[0][2];
    assert!((trapezoid(&rows) - cdf).abs() < 1e-4, "{} vs {cdf}", trapezoid(&rows));
}

#[test]
fn density_matern_phi_mode() {
    let out = pcvcm(&["density", "--family", "matern-phi", "--theta", "1.386", "--grid-end", "5", "--grid-points", "4000"]);
    assert!(out.status.success());
    let (_, rows) = csv_rows(&out.stdout);
    let imax = (0..rows.len()).max_by(|&i, &j| rows[i][1].total_cmp(&rows[j][1])).unwrap();
    assert!((rows[imax][0] - 0.693).abs() < 5e-3, "mode {}", rows[imax][0]);
    assert!(rows[..imax].windows(2).all(|w| w[1][1] >= w[0][1]));
    assert!(rows[imax..].windows(2).all(|w| w[1][1] <= w[0][1]));
}

#[test]
fn density_rejects_nonpositive_rate() {
    assert_eq!(pcvcm(&["density", "--family", "exch", "--theta", "-1"]).status.code(), Some(2));
}

#[test]
fn theta_wins_over_statement_with_warning() {
    let out = pcvcm(&["density", "--family", "precision", "--theta", "2", "--U", "1", "--a", "0.01", "--format", "json"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("using --theta"));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["theta"], 2.0);
}

#[test]
fn compare_curves_only_and_deterministic() {
    let args = ["compare", "--scenario", "sc1", "--reps", "0", "--seed", "3"];
    let a = pcvcm(&args);
    let b = pcvcm(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["report"].is_null());
    let curves = &v["curves"];
    assert_eq!(curves["distance"][0], 0.0);
    assert!(curves["pc"][0].as_f64().unwrap() > 0.0);
    assert!(curves["uniform"][0].as_f64().unwrap() <= 1e-6);
}

#[test]
fn compare_with_replications_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "compare", "--scenario", "sc1", "--n", "20", "--reps", "3", "--seed", "7", "--grid-points", "21", "-o", "cmp.json",
    ];
    let out = Command::new(env!("CARGO_BIN_EXE_pcvcm")).args(args).env("PCVCM_OUT_DIR", dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(dir.path().join("cmp.json")).unwrap();
    let v: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["report"]["priors"].as_array().unwrap().len(), 3);
    let mut table = csv::Reader::from_path(dir.path().join("cmp_table.csv")).unwrap();
    assert_eq!(&table.headers().unwrap()[0], "prior");
    let names: Vec<String> = table.records().map(|r| r.unwrap()[0].to_owned()).collect();
    assert_eq!(names, ["pc", "uniform", "reference"]);
    assert!(dir.path().join("cmp_curves.csv").exists());

    let out = Command::new(env!("CARGO_BIN_EXE_pcvcm")).args(args).env("PCVCM_OUT_DIR", dir.path()).output().unwrap();
    assert!(out.status.success());
    assert_eq!(first, std::fs::read(dir.path().join("cmp.json")).unwrap());
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut args = vec!["simulate", "-o", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    assert!(pcvcm(&args).status.success());
    assert!(dir.join(format!("{name}.meta.json")).exists());
    path
}

#[test]
fn fit_sc2_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "sc2.csv", &["--scenario", "sc2", "--seed", "11"]);
    let v = ok_json(&[
        "fit", "--data", data.to_str().unwrap(), "--family", "ar1", "--noise", "0.1", "--U", "0.5", "--a", "0.75",
    ]);
    let rho = &v["posterior"]["hyper_summaries"][0];
    assert_eq!(rho["parameter"], "rho");
    let mean = rho["mean"].as_f64().unwrap();
    assert!((mean - 0.5).abs() < 0.1, "posterior mean rho {mean}");
    let w: f64 = v["posterior"]["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((w - 1.0).abs() < 1e-12);
    assert_eq!(v["posterior"]["beta_mean"].as_array().unwrap().len(), 500);
}

#[test]
fn fit_is_equivariant_to_covariate_scale() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &["--scenario", "sc2", "--n", "60", "--noise", "0.5", "--seed", "5"]);
    let s = 4.0;
    let mut rdr = csv::Reader::from_path(&data).unwrap();
    let mut w = csv::Writer::from_path(dir.path().join("scaled.csv")).unwrap();
    w.write_record(["t", "x", "y"]).unwrap();
    for r in rdr.records() {
        let r = r.unwrap();
        let x: f64 = r[1].parse().unwrap();
        w.serialize((&r[0], x / s, &r[2])).unwrap();
    }
    w.flush().unwrap();

    let fit = |path: &Path, u: f64, b0: f64| {
        ok_json(&[
            "fit", "--data", path.to_str().unwrap(), "--family", "rw1", "--noise", "0.5", "--U", &u.to_string(), "--a",
            "0.01", "--beta0-var", &b0.to_string(),
        ])
    };
    let a = fit(&data, 1.0, 1.0);
    let b = fit(&dir.path().join("scaled.csv"), s, s * s);
    let ea = a["posterior"]["effect_mean"].as_array().unwrap();
    let eb = b["posterior"]["effect_mean"].as_array().unwrap();
    let scale = ea.iter().map(|v| v.as_f64().unwrap().abs()).fold(0.0, f64::max);
    for (p, q) in ea.iter().zip(eb) {
        let (p, q) = (p.as_f64().unwrap(), q.as_f64().unwrap());
        assert!((p - q).abs() <= 0.01 * scale, "{p} vs {q}");
    }
}

#[test]
fn fit_empty_file_is_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "").unwrap();
    let out = pcvcm(&["fit", "--data", path.to_str().unwrap(), "--family", "ar1", "--theta", "1"]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(&path, "t,x,y\n").unwrap();
    let out = pcvcm(&["fit", "--data", path.to_str().unwrap(), "--family", "ar1", "--theta", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no rows"));
}

#[test]
fn matrix_and_sample_are_headerless_and_seeded() {
    let out = pcvcm(&["matrix", "--family", "ar1", "--n", "3", "--rho", "0.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap().split(',').count(), 3);
    assert!(text.starts_with("1"));

    let a = pcvcm(&["sample", "--family", "ar1", "--theta", "2", "--count", "50", "--seed", "9"]);
    let b = pcvcm(&["sample", "--family", "ar1", "--theta", "2", "--count", "50", "--seed", "9"]);
    assert_eq!(a.stdout, b.stdout);
    let (header, rows) = csv_rows(&a.stdout);
    assert_eq!(header, ["value"]);
    assert!(rows.iter().all(|r| r[0] > -1.0 && r[0] < 1.0));
}

#[test]
fn distance_command() {
    let v = ok_json(&["distance", "--family", "exch", "--rho", "0.75"]);
    assert!((v["limit"]["value"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(pcvcm(&["distance", "--family", "exch", "--rho", "1.5"]).status.code(), Some(2));
}
