mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use common::*;
use grouplens::cli::{run_from, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NONCONVERGENCE, EXIT_OK};
use grouplens::model::{default_weights, RegressionProblem};
use grouplens::scaled::{fit_scaled, ScaledOptions};
use grouplens::simulation::{generate, SimDesign};
use nalgebra::{DMatrix, DVector};
use serde_json::Value;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["grouplens"];
    full.extend_from_slice(args);
    run_from(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn write_rows(path: &Path, header: Option<&str>, rows: impl Iterator<Item = Vec<String>>) {
    let mut text = String::new();
    if let Some(h) = header {
        text.push_str(h);
        text.push('\n');
    }
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

/// Writes design, response and 1-based group files; returns their paths.
fn write_problem(dir: &Path, x: &DMatrix<f64>, y: &DVector<f64>, labels: &[usize]) -> [PathBuf; 3] {
    let paths = [dir.join("x.csv"), dir.join("y.csv"), dir.join("g.csv")];
    let hdr: Vec<String> = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    write_rows(
        &paths[0],
        Some(&hdr.join(",")),
        x.row_iter()
            .map(|r| r.iter().map(|v| format!("{v:e}")).collect()),
    );
    write_rows(
        &paths[1],
        Some("y"),
        y.iter().map(|v| vec![format!("{v:e}")]),
    );
    write_rows(
        &paths[2],
        None,
        labels.iter().map(|g| vec![(g + 1).to_string()]),
    );
    paths
}

struct Toy {
    dir: TempDir,
    files: [PathBuf; 3],
    x: DMatrix<f64>,
    y: DVector<f64>,
}

fn toy(seed: u64, n: usize, sizes: &[usize], rho: f64) -> Toy {
    let mut r = rng(seed);
    let p: usize = sizes.iter().sum();
    let mut x = gaussian_matrix(&mut r, n, p);
    if rho > 0.0 {
        let common = gaussian_vector(&mut r, n);
        for mut c in x.column_iter_mut() {
            c.axpy(rho.sqrt(), &common, (1.0 - rho).sqrt());
        }
    }
    let mut beta = DVector::zeros(p);
    beta[0] = 1.5;
    beta[1] = -1.0;
    let y = &x * &beta + gaussian_vector(&mut r, n);
    let labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(j, &d)| vec![j; d])
        .collect();
    let dir = TempDir::new().unwrap();
    let files = write_problem(dir.path(), &x, &y, &labels);
    Toy { dir, files, x, y }
}

fn data_args(t: &Toy) -> Vec<String> {
    vec![
        "--design".into(),
        s(&t.files[0]).into(),
        "--response".into(),
        s(&t.files[1]).into(),
        "--groups".into(),
        s(&t.files[2]).into(),
    ]
}

fn run_owned(args: Vec<String>) -> i32 {
    run(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn fit_writes_coefficients_and_config() {
    let t = toy(1, 40, &[2, 3, 2, 3], 0.0);
    let out = t.dir.path().join("fit.json");
    let mut args = vec!["fit".to_string()];
    args.extend(data_args(&t));
    args.extend(["--out".into(), s(&out).into()]);
    assert_eq!(run_owned(args), EXIT_OK);
    let v = read_json(&out);
    assert_eq!(v["beta"].as_array().unwrap().len(), 10);
    assert_eq!(v["converged"], true);
    assert!(v["sigma"].as_f64().unwrap() > 0.0);
    assert_eq!(v["config"]["command"], "fit");
}

#[test]
fn nonfinite_response_is_rejected_with_its_line() {
    let t = toy(2, 20, &[2, 2], 0.0);
    let mut text = fs::read_to_string(&t.files[1]).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mut edited: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    edited[4] = "NaN".into();
    text = edited.join("\n");
    fs::write(&t.files[1], text).unwrap();
    let out = t.dir.path().join("fit.json");
    let mut args = vec!["fit".to_string()];
    args.extend(data_args(&t));
    args.extend(["--out".into(), s(&out).into()]);
    let output = Command::new(env!("CARGO_BIN_EXE_grouplens"))
        .args(&args)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(EXIT_INPUT));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("line 5"), "stderr: {err}");
    assert!(!out.exists());
}

#[test]
fn unconverged_fit_reports_code_two() {
    let t = toy(3, 40, &[2, 3, 2, 3], 0.0);
    let out = t.dir.path().join("fit.json");
    let mut args = vec!["fit".to_string()];
    args.extend(data_args(&t));
    args.extend([
        "--max-outer".into(),
        "1".into(),
        "--out".into(),
        s(&out).into(),
    ]);
    assert_eq!(run_owned(args), EXIT_NONCONVERGENCE);
    assert_eq!(read_json(&out)["converged"], false);
}

#[test]
fn testing_the_whole_design_is_the_chi_square_test() {
    let t = toy(4, 30, &[2, 3, 2], 0.0);
    let out = t.dir.path().join("test.json");
    let mut args = vec!["test".to_string()];
    args.extend(data_args(&t));
    let all: Vec<String> = (1..=7).map(|i| i.to_string()).collect();
    args.extend([
        "--group".into(),
        format!("v:{}", all.join(",")),
        "--oracle-sigma".into(),
        "1.0".into(),
        "--out".into(),
        s(&out).into(),
    ]);
    assert_eq!(run_owned(args), EXIT_OK);
    let v = read_json(&out);
    let t2 = (projector(&t.x) * &t.y).norm_squared();
    let expected = 1.0 - ChiSquared::new(7.0).unwrap().cdf(t2);
    let got = v["p_value"].as_f64().unwrap();
    assert!(
        (got - expected).abs() <= 1e-10 * expected.max(1e-300) + 1e-14,
        "{got} vs {expected}"
    );
    assert!((v["T"].as_f64().unwrap() - t2.sqrt()).abs() <= 1e-8 * t2.sqrt());
    assert_eq!(v["config"]["command"], "test");
}

#[test]
fn infeasible_projection_gives_no_p_value() {
    let t = toy(5, 15, &[2; 15], 0.9);
    let out = t.dir.path().join("test.json");
    let mut args = vec!["test".to_string()];
    args.extend(data_args(&t));
    args.extend([
        "--group".into(),
        "1".into(),
        "--xi".into(),
        "1e-11".into(),
        "--out".into(),
        s(&out).into(),
    ]);
    let code = run_owned(args);
    assert_eq!(code, EXIT_INFEASIBLE);
    let v = read_json(&out);
    assert!(v.get("p_value").is_none());
    assert_eq!(v["feasible"], false);
    assert!(v.get("config").is_some());
}

fn small_spec(seed: u64) -> String {
    let d = SimDesign {
        n: 60,
        p: 24,
        group_size: 3,
        active_groups: 2,
        sparsity: 6,
        seed,
        ..SimDesign::sigma_study(24)
    };
    serde_json::to_string(&d).unwrap()
}

#[test]
fn emitted_problem_refits_to_the_in_memory_fit() {
    let dir = TempDir::new().unwrap();
    let spec = small_spec(9);
    let out = dir.path().join("sim.json");
    let emit = dir.path().join("emit");
    fs::create_dir(&emit).unwrap();
    let code = run(&[
        "simulate",
        "--spec",
        &spec,
        "--reps",
        "1",
        "--out",
        s(&out),
        "--emit-dir",
        s(&emit),
    ]);
    assert_eq!(code, EXIT_OK);
    let fit_out = dir.path().join("fit.json");
    let code = run(&[
        "fit",
        "--design",
        s(&emit.join("design.csv")),
        "--response",
        s(&emit.join("response.csv")),
        "--groups",
        s(&emit.join("groups.csv")),
        "--out",
        s(&fit_out),
    ]);
    assert_eq!(code, EXIT_OK);
    let design: SimDesign = serde_json::from_str(&spec).unwrap();
    let data = generate(&design, 0).unwrap();
    let w = default_weights(&data.partition, design.n, 1.0).unwrap();
    let problem =
        RegressionProblem::new(data.x.clone(), data.y.clone(), data.partition.clone(), w).unwrap();
    let fit = fit_scaled(&problem, &ScaledOptions::default()).unwrap();
    let v = read_json(&fit_out);
    let beta: Vec<f64> = v["beta"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b.as_f64().unwrap())
        .collect();
    for (a, b) in beta.iter().zip(fit.beta.iter()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
    assert!((v["sigma"].as_f64().unwrap() - fit.sigma).abs() <= 1e-12 * fit.sigma);
}

#[test]
fn simulation_output_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let spec = small_spec(11);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(
        run(&[
            "simulate",
            "--spec",
            &spec,
            "--reps",
            "3",
            "--threads",
            "1",
            "--out",
            s(&a)
        ]),
        EXIT_OK
    );
    assert_eq!(
        run(&["simulate", "--spec", &spec, "--reps", "3", "--out", s(&b)]),
        EXIT_OK
    );
    let strip = |p: &Path| {
        let mut v = read_json(p);
        v["config"]["args"]["out"] = Value::Null;
        v["config"]["args"]["threads"] = Value::Null;
        v
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(read_json(&a)["config"]["command"], "simulate");
    let first = fs::read(&a).unwrap();
    assert_eq!(
        run(&[
            "simulate",
            "--spec",
            &spec,
            "--reps",
            "3",
            "--threads",
            "1",
            "--out",
            s(&a)
        ]),
        EXIT_OK
    );
    assert_eq!(first, fs::read(&a).unwrap());
}

#[test]
fn single_replication_and_bad_specs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("one.json");
    assert_eq!(
        run(&[
            "simulate",
            "--spec",
            &small_spec(3),
            "--reps",
            "1",
            "--out",
            s(&out)
        ]),
        EXIT_OK
    );
    assert_eq!(read_json(&out)["records"].as_array().unwrap().len(), 1);
    let bad = r#"{"n": 10, "p": 7, "group_size": 3}"#;
    assert_eq!(
        run(&[
            "simulate",
            "--spec",
            bad,
            "--out",
            s(&dir.path().join("x.json"))
        ]),
        EXIT_INPUT
    );
    assert_eq!(
        run(&[
            "simulate",
            "--spec",
            "not json",
            "--out",
            s(&dir.path().join("y.json"))
        ]),
        EXIT_INPUT
    );
    assert_eq!(
        run(&[
            "simulate",
            "--preset",
            "nope",
            "--out",
            s(&dir.path().join("z.json"))
        ]),
        EXIT_INPUT
    );
}

#[test]
fn diagnose_identity_gram() {
    let dir = TempDir::new().unwrap();
    let n = 6;
    let x = DMatrix::identity(n, n) * (n as f64).sqrt();
    let y = DVector::zeros(n);
    let files = write_problem(dir.path(), &x, &y, &[0, 0, 1, 1, 2, 2]);
    let out = dir.path().join("diag.json");
    let code = run(&[
        "diagnose",
        "--design",
        s(&files[0]),
        "--groups",
        s(&files[2]),
        "--support",
        "1",
        "--xi",
        "1,2",
        "--budget",
        "500",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let v = read_json(&out);
    assert_eq!(v["config"]["command"], "diagnose");
    assert_eq!(v["ordering_holds"], true);
    for rep in v["reports"].as_array().unwrap() {
        let re = rep["re"]["upper_bound"].as_f64().unwrap();
        assert!((re - 1.0).abs() < 1e-6, "RE {re}");
    }
    let code = run(&[
        "diagnose",
        "--design",
        s(&files[0]),
        "--groups",
        s(&files[2]),
        "--support",
        "1",
        "--budget",
        "0",
        "--out",
        s(&dir.path().join("none.json")),
    ]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn malformed_group_files_are_input_errors() {
    let t = toy(6, 20, &[2, 2], 0.0);
    write_rows(
        &t.files[2],
        None,
        ["1", "3", "3", "3"].iter().map(|v| vec![v.to_string()]),
    );
    let mut args = vec!["fit".to_string()];
    args.extend(data_args(&t));
    args.extend(["--out".into(), s(&t.dir.path().join("f.json")).into()]);
    assert_eq!(run_owned(args), EXIT_INPUT);
}
