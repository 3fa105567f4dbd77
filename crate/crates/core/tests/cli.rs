//! The command-line surface, driven in-process.

mod common;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tempfile::TempDir;

use common::*;
use robcd::cli::run;
use robcd::confidence::{Alternative, ConfidenceObject};
use robcd::models::TwoSampleNormal;
use robcd::Dataset;

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn two_sample_csv(data: &Dataset) -> String {
    let mut s = String::from("value,group\n");
    for o in data.iter() {
        writeln!(s, "{:?},{}", o.y, o.group + 1).unwrap();
    }
    s
}

/// Response then every design column after the intercept.
fn regression_csv(data: &Dataset, names: &[&str]) -> String {
    let mut s = format!("y,{}\n", names.join(","));
    let x = data.design();
    for (i, o) in data.iter().enumerate() {
        write!(s, "{:?}", o.y).unwrap();
        for j in 1..x.ncols() {
            write!(s, ",{:?}", x[(i, j)]).unwrap();
        }
        s.push('\n');
    }
    s
}

fn run_json(args: &[&str], out: &Path) -> Value {
    let mut full = vec!["robcd"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", out.to_str().unwrap()]);
    let code = run(full);
    assert_eq!(code, 0, "{args:?}");
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

fn clean_two_sample(dir: &TempDir) -> (Dataset, PathBuf) {
    let data = simulate(&TwoSampleNormal, &[2.0, 0.0, 1.0, 1.0], &[10, 20], 42);
    let path = write(dir, "two.csv", &two_sample_csv(&data));
    (data, path)
}

#[test]
fn missing_file_exits_with_two() {
    let code = run(["robcd", "fit", "--model", "two-sample-normal", "--data", "/nonexistent/x.csv"]);
    assert_eq!(code, 2);
    let err = robcd::cli::read_data(Path::new("/nonexistent/x.csv"), "two-sample-normal", true)
        .unwrap_err();
    assert!(err.to_string().contains("/nonexistent/x.csv"));
}

#[test]
fn malformed_rows_report_their_line() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.csv", "value,group\n1.0,1\n2.0,2\nabc,1\n0.5,2\n");
    let err = robcd::cli::read_data(&bad, "two-sample-normal", true).unwrap_err();
    assert!(err.to_string().contains("line 4"), "{err}");
    for v in ["NaN", "inf", "-Infinity"] {
        let p = write(&dir, "nan.csv", &format!("value,group\n1.0,1\n2.0,2\n{v},2\n0.3,1\n"));
        let err = robcd::cli::read_data(&p, "two-sample-normal", true).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{v}: {err}");
        let code = run(["robcd", "fit", "--model", "two-sample-normal", "--data", p.to_str().unwrap()]);
        assert_eq!(code, 2);
    }
    let p = write(&dir, "grp.csv", "value,group\n1.0,1\n2.0,3\n");
    assert!(robcd::cli::read_data(&p, "two-sample-normal", true).is_err());
}

#[test]
fn log_fit_reports_the_mle() {
    let dir = TempDir::new().unwrap();
    let (data, path) = clean_two_sample(&dir);
    let v = run_json(
        &["fit", "--model", "two-sample-normal", "--data", path.to_str().unwrap()],
        &dir.path().join("fit.json"),
    );
    let th: Vec<f64> = serde_json::from_value(v["theta_hat"].clone()).unwrap();
    let (x, y) = (data.group_values(0), data.group_values(1));
    let mle = [mean(&x), mean(&y), ml_var(&x), ml_var(&y)];
    for (a, b) in th.iter().zip(mle) {
        assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{a} vs {b}");
    }
    assert_eq!(v["converged"], Value::Bool(true));
}

#[test]
fn tsallis_fit_resists_a_shifted_value() {
    let dir = TempDir::new().unwrap();
    let data = simulate(&TwoSampleNormal, &[2.0, 0.0, 1.0, 1.0], &[100, 100], 42);
    let path = write(&dir, "wide.csv", &two_sample_csv(&data));
    // Shift the value nearest the middle so that losing it as a regular
    // point costs little and what remains is the pull of the outlier.
    let x = data.group_values(0);
    let mid = mean(&x);
    let k = (0..x.len())
        .min_by(|&a, &b| (x[a] - mid).abs().partial_cmp(&(x[b] - mid).abs()).unwrap())
        .unwrap();
    let shifted = data.shifted(0, k, -7.0).unwrap();
    let spath = write(&dir, "shifted.csv", &two_sample_csv(&shifted));
    let fit = |rule: &[&str], p: &Path, tag: &str| {
        let mut args = vec!["fit", "--model", "two-sample-normal", "--data", p.to_str().unwrap()];
        args.extend_from_slice(rule);
        let v = run_json(&args, &dir.path().join(format!("{tag}.json")));
        let th: Vec<f64> = serde_json::from_value(v["theta_hat"].clone()).unwrap();
        let se: Vec<f64> = serde_json::from_value(v["standard_errors"].clone()).unwrap();
        (th, se)
    };
    let move_in_se = |rule: &[&str], tag: &str| {
        let (a, se) = fit(rule, &path, &format!("{tag}-clean"));
        let (b, _) = fit(rule, &spath, &format!("{tag}-shifted"));
        a.iter().zip(&b).zip(&se).map(|((a, b), s)| (a - b).abs() / s).fold(0.0, f64::max)
    };
    let robust = move_in_se(&["--rule", "tsallis", "--gamma", "1.22"], "ts");
    let log = move_in_se(&[], "log");
    assert!(robust < 0.2, "robust moved {robust} se");
    assert!(log > 1.0, "log moved {log} se");
}

#[test]
fn cd_document_holds_both_pivots_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let (_, path) = clean_two_sample(&dir);
    let v = run_json(
        &[
            "cd", "--model", "two-sample-normal", "--data", path.to_str().unwrap(),
            "--rule", "tsallis", "--gamma", "1.22", "--pivot", "wald", "--pivot", "root",
            "--level", "0.95", "--level", "0.9", "--h0", "2", "--alt", "less", "--evidence", "1,3",
        ],
        &dir.path().join("cd.json"),
    );
    let curves = v["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 2);
    assert_eq!(curves[0]["kind"], "wald");
    assert_eq!(curves[1]["kind"], "root");
    for c in curves {
        let cd: ConfidenceObject = serde_json::from_value(c.clone()).unwrap();
        let [lo, hi] = c["ci"]["0.95"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect::<Vec<_>>()[..]
        else {
            panic!("ci missing")
        };
        assert!((cd.cdf_at(lo) - 0.025).abs() <= 1e-3);
        assert!((cd.cdf_at(hi) - 0.975).abs() <= 1e-3);
        let iv = cd.ci(0.95).unwrap();
        assert!((iv.lo - lo).abs() <= 1e-12 && (iv.hi - hi).abs() <= 1e-12);
        let p = c["p_value"]["p"].as_f64().unwrap();
        assert!((cd.p_value(2.0, Alternative::Less) - p).abs() <= 1e-12);
        let ev = c["evidence"]["confidence"].as_f64().unwrap();
        assert!((cd.evidence(1.0, 3.0).unwrap() - ev).abs() <= 1e-12);
    }
}

#[test]
fn calibrate_lands_near_the_usual_constant() {
    let dir = TempDir::new().unwrap();
    let layout = regression_layout(500, 4);
    let data = simulate_regression(&[1.0, 1.0, 0.0, 1.0], &layout, 8);
    let path = write(&dir, "reg.csv", &regression_csv(&data, &["x1", "x2"]));
    let v = run_json(
        &["calibrate", "--model", "linear-regression", "--data", path.to_str().unwrap(), "--target", "0.9"],
        &dir.path().join("cal.json"),
    );
    let g = v["gamma"].as_f64().unwrap();
    assert!((1.15..=1.30).contains(&g), "gamma {g}");
}

#[test]
fn taif_of_the_log_score_is_unbounded() {
    let dir = TempDir::new().unwrap();
    let (_, path) = clean_two_sample(&dir);
    for pivot in ["wald", "root"] {
        let v = run_json(
            &["taif", "--model", "two-sample-normal", "--data", path.to_str().unwrap(), "--pivot", pivot],
            &dir.path().join(format!("taif-{pivot}.json")),
        );
        assert_eq!(v["bounded_verdict"], Value::Bool(false), "{pivot}");
        let v = run_json(
            &[
                "taif", "--model", "two-sample-normal", "--data", path.to_str().unwrap(),
                "--pivot", pivot, "--rule", "tsallis", "--gamma", "1.22",
            ],
            &dir.path().join(format!("taif-ts-{pivot}.json")),
        );
        assert_eq!(v["bounded_verdict"], Value::Bool(true), "{pivot}");
    }
}

#[test]
fn single_replicate_simulation_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let design = write(
        &dir,
        "design.json",
        r#"{"model":"two-sample-normal","theta":[2,0,1,1],"sample_sizes":[10,20],"n_reps":1,"seed":7,
            "methods":[{"rule":{"kind":"log"},"pivot":"root"},{"rule":{"kind":"tsallis","gamma":1.22},"pivot":"wald"}]}"#,
    );
    let go = |name: &str| {
        let out = dir.path().join(name);
        assert_eq!(run(["robcd", "simulate", "--design", design.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
        std::fs::read_to_string(out).unwrap()
    };
    assert_eq!(go("a.json"), go("b.json"));
    let bad = write(&dir, "bad.json", r#"{"model":"two-sample-normal","n_reps":0}"#);
    assert_eq!(run(["robcd", "simulate", "--design", bad.to_str().unwrap()]), 2);
}

#[test]
fn planted_outliers_split_the_p_values() {
    let dir = TempDir::new().unwrap();
    let data = planted_outlier_regression(2, 3, 60.0);
    let path = write(&dir, "gfr.csv", &regression_csv(&data, &["inv_cr", "age"]));
    let p = |rule: &[&str], tag: &str| {
        let mut args = vec![
            "cd", "--model", "linear-regression", "--data", path.to_str().unwrap(),
            "--interest", "2", "--h0", "0", "--alt", "two-sided",
        ];
        args.extend_from_slice(rule);
        let v = run_json(&args, &dir.path().join(format!("{tag}.json")));
        assert_eq!(v["curves"][0]["interest"], "age");
        v["curves"][0]["p_value"]["p"].as_f64().unwrap()
    };
    let robust = p(&["--rule", "tsallis", "--gamma", "1.22"], "robust");
    let log = p(&[], "log");
    assert!(robust < 0.05 && log > 0.05, "robust {robust}, log {log}");
}
