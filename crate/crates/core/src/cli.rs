//! Command-line front end: `fit`, `test`, `simulate` and `diagnose`.
//!
//! Exit codes: 0 success, 1 input error, 2 non-convergence (outputs are
//! still written), 3 infeasible projection. Every JSON output embeds the
//! resolved configuration it was produced with.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use crate::diagnostics::{estimate_all_path, ConeContext};
use crate::error::Error;
use crate::inference::{group_test, SigmaPlugin, TestOptions};
use crate::model::{default_weights, GroupPartition, RegressionProblem};
use crate::projection::{feasibility_report, relaxed_projection, PenaltyKind, ProjectionOptions};
use crate::scaled::{fit_scaled, ScaledFit, ScaledOptions};
use crate::simulation::{
    generate, preset, qq_csv, run_replications, MethodConfig, SimDesign, PRESET_NAMES,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "grouplens",
    version,
    about = "Group inference with the de-biased scaled group Lasso"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the scaled group Lasso.
    Fit(FitArgs),
    /// Test whether a group of coefficients is zero.
    Test(TestArgs),
    /// Run a Monte-Carlo study.
    Simulate(SimulateArgs),
    /// Estimate cone-restricted design constants.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// n x p design CSV (row-major, optional header).
    #[arg(long)]
    pub design: PathBuf,
    /// n x 1 response CSV.
    #[arg(long)]
    pub response: PathBuf,
    /// p x 1 CSV of 1-based group ids.
    #[arg(long)]
    pub groups: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitTuning {
    /// Multiplier of the default weights `sqrt(d_j / n) + sqrt(2 log M / n)`.
    #[arg(long, default_value_t = 1.0)]
    pub weights_scale: f64,
    /// Maximal number of noise-level updates.
    #[arg(long, default_value_t = 100)]
    pub max_outer: usize,
    /// Relative tolerance on the noise level.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Inner KKT tolerance relative to `||y|| / sqrt(n)`.
    #[arg(long, default_value_t = 1e-9)]
    pub inner_tol: f64,
}

impl FitTuning {
    fn scaled_options(&self) -> ScaledOptions {
        ScaledOptions {
            max_outer: self.max_outer,
            conv_tol: self.tol,
            inner_kkt_tol: self.inner_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub tuning: FitTuning,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub tuning: FitTuning,
    /// Group id (`3`) or 1-based variable indices (`v:1,2,5`).
    #[arg(long)]
    pub group: String,
    /// Relaxation multiplier of the projection penalty.
    #[arg(long, default_value_t = 1.0)]
    pub xi: f64,
    #[arg(long, default_value = "frobenius")]
    pub penalty: PenaltyKind,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Use this known noise level instead of the scaled estimate.
    #[arg(long)]
    pub oracle_sigma: Option<f64>,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Named scenario: sigma, small-groups, large-groups, global-null or
    /// comparison:<block>:<rho>:<tau>.
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    /// Inline JSON design, or `@path` to a JSON file.
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Overrides the design seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Use the large-p variant of the noise-level study.
    #[arg(long)]
    pub slow: bool,
    /// Overrides the scenario's weight multiplier.
    #[arg(long)]
    pub weights_scale: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub xi: f64,
    #[arg(long, default_value = "frobenius")]
    pub penalty: PenaltyKind,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Plug the true noise level into the tests.
    #[arg(long)]
    pub oracle_sigma: bool,
    /// Summary JSON. QQ tables go next to it as `<stem>.qq_<series>.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write design.csv, response.csv and groups.csv of replication 0.
    #[arg(long)]
    pub emit_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagnoseArgs {
    /// n x p design CSV.
    #[arg(long)]
    pub design: PathBuf,
    /// p x 1 CSV of 1-based group ids.
    #[arg(long)]
    pub groups: PathBuf,
    /// Comma-separated group ids forming the support set T.
    #[arg(long)]
    pub support: String,
    /// Comma-separated cone relaxations.
    #[arg(long, default_value = "1")]
    pub xi: String,
    /// Random directions per relaxation.
    #[arg(long, default_value_t = 2000)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub weights_scale: f64,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible(_) | Error::RankDeficient(_) => EXIT_INFEASIBLE,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Entry point of the binary.
pub fn run() -> i32 {
    let _ =
        env_logger::Builder::from_env(env_logger::Env::new().filter_or("GROUPLENS_LOG", "warn"))
            .try_init();
    run_from(std::env::args_os())
}

pub fn execute(command: &Command) -> CliResult {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    }
}

// ---------------------------------------------------------------- CSV I/O

fn is_number(token: &str) -> bool {
    token.trim().parse::<f64>().is_ok()
}

/// Reads a numeric CSV into rows. A first row whose first token is not a
/// number is treated as a header.
pub fn read_csv(path: &Path) -> std::result::Result<Vec<Vec<f64>>, Failure> {
    let name = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::input(format!("{name}: {e}")))?;
    let mut rows = Vec::new();
    let mut width = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Failure::input(format!("{name}: {e}")))?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.iter().all(|t| t.is_empty()) {
            continue;
        }
        if i == 0 && !rec.get(0).is_some_and(is_number) {
            continue;
        }
        let row: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(c, t)| match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(Failure::input(format!(
                    "{name}: line {line}, column {}: non-finite value {t:?}",
                    c + 1
                ))),
                Err(_) => Err(Failure::input(format!(
                    "{name}: line {line}, column {}: cannot parse {t:?} as a number",
                    c + 1
                ))),
            })
            .collect::<std::result::Result<_, _>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Failure::input(format!(
                    "{name}: line {line}: expected {w} fields, found {}",
                    row.len()
                )))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Failure::input(format!("{name}: no data rows")));
    }
    Ok(rows)
}

fn read_matrix(path: &Path) -> std::result::Result<DMatrix<f64>, Failure> {
    let rows = read_csv(path)?;
    let (n, p) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn read_column(path: &Path) -> std::result::Result<Vec<f64>, Failure> {
    let rows = read_csv(path)?;
    if rows[0].len() != 1 {
        return Err(Failure::input(format!(
            "{}: expected a single column, found {}",
            path.display(),
            rows[0].len()
        )));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

/// Group ids must be the integers `1..=M`, each used at least once.
fn read_partition(path: &Path) -> std::result::Result<GroupPartition, Failure> {
    let ids = read_column(path)?;
    let mut labels = Vec::with_capacity(ids.len());
    for (i, &v) in ids.iter().enumerate() {
        if v.fract() != 0.0 || v < 1.0 {
            return Err(Failure::input(format!(
                "{}: entry {}: group id {v} is not a positive integer",
                path.display(),
                i + 1
            )));
        }
        labels.push(v as usize - 1);
    }
    let m = labels.iter().max().map_or(0, |&l| l + 1);
    let mut used = vec![false; m];
    for &l in &labels {
        used[l] = true;
    }
    if let Some(j) = used.iter().position(|u| !u) {
        return Err(Failure::input(format!(
            "{}: group ids must run from 1 to {m}, but {} is unused",
            path.display(),
            j + 1
        )));
    }
    Ok(GroupPartition::from_labels(&labels)?)
}

fn load_problem(
    data: &DataArgs,
    weights_scale: f64,
) -> std::result::Result<RegressionProblem, Failure> {
    let x = read_matrix(&data.design)?;
    let y = read_column(&data.response)?;
    let partition = read_partition(&data.groups)?;
    if y.len() != x.nrows() {
        return Err(Failure::input(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if partition.num_vars() != x.ncols() {
        return Err(Failure::input(format!(
            "design has {} columns but groups lists {}",
            x.ncols(),
            partition.num_vars()
        )));
    }
    let w = default_weights(&partition, x.nrows(), weights_scale)?;
    Ok(RegressionProblem::new(
        x,
        DVector::from_vec(y),
        partition,
        w,
    )?)
}

fn write_csv(
    path: &Path,
    rows: impl Iterator<Item = Vec<f64>>,
) -> std::result::Result<(), Failure> {
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

fn write_text(path: &Path, text: &str) -> std::result::Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> std::result::Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    write_text(path, &text)
}

/// Writes `x`, `y` and the 1-based group ids as CSV files in `dir`.
pub fn write_problem_files(
    dir: &Path,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    partition: &GroupPartition,
) -> std::result::Result<(), Failure> {
    write_csv(
        &dir.join("design.csv"),
        x.row_iter().map(|r| r.iter().copied().collect()),
    )?;
    write_csv(&dir.join("response.csv"), y.iter().map(|&v| vec![v]))?;
    write_csv(
        &dir.join("groups.csv"),
        (0..partition.num_vars()).map(|i| vec![(partition.group_of(i) + 1) as f64]),
    )
}

// ---------------------------------------------------------------- commands

fn fit_json(fit: &ScaledFit, problem: &RegressionProblem) -> serde_json::Value {
    json!({
        "beta": fit.beta.as_slice(),
        "sigma": fit.sigma,
        "kkt_residual": fit.kkt_residual,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "weights": problem.weights,
    })
}

fn cmd_fit(a: &FitArgs) -> CliResult {
    let problem = load_problem(&a.data, a.tuning.weights_scale)?;
    let opts = a.tuning.scaled_options();
    let fit = fit_scaled(&problem, &opts)?;
    let mut out = fit_json(&fit, &problem);
    out["config"] = json!({ "command": "fit", "args": a, "scaled": opts });
    write_json(&a.out, &out)?;
    Ok(if fit.converged {
        EXIT_OK
    } else {
        EXIT_NONCONVERGENCE
    })
}

/// Resolves `3` (group id) or `v:1,2,5` (variable indices), both 1-based.
pub fn parse_group_spec(
    spec: &str,
    partition: &GroupPartition,
) -> std::result::Result<Vec<usize>, Failure> {
    let spec = spec.trim();
    if let Some(list) = spec.strip_prefix("v:") {
        let p = partition.num_vars();
        let mut vars = Vec::new();
        for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let i: usize = tok
                .parse()
                .map_err(|_| Failure::input(format!("bad variable index {tok:?}")))?;
            if i == 0 || i > p {
                return Err(Failure::input(format!("variable {i} outside 1..={p}")));
            }
            vars.push(i - 1);
        }
        vars.sort_unstable();
        vars.dedup();
        if vars.is_empty() {
            return Err(Failure::input("empty group"));
        }
        Ok(vars)
    } else {
        let m = partition.num_groups();
        let j: usize = spec
            .parse()
            .map_err(|_| Failure::input(format!("bad group {spec:?}; use an id or v:i,j,...")))?;
        if j == 0 || j > m {
            return Err(Failure::input(format!("group {j} outside 1..={m}")));
        }
        Ok(partition.group(j - 1).to_vec())
    }
}

fn cmd_test(a: &TestArgs) -> CliResult {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Failure::input(format!(
            "alpha must lie in (0, 1), got {}",
            a.alpha
        )));
    }
    let problem = load_problem(&a.data, a.tuning.weights_scale)?;
    let target = parse_group_spec(&a.group, &problem.partition)?;
    let scaled = a.tuning.scaled_options();
    let projection = ProjectionOptions {
        penalty: a.penalty,
        xi: a.xi,
        ..Default::default()
    };
    let test_opts = TestOptions {
        alpha: a.alpha,
        sigma: a
            .oracle_sigma
            .map_or(SigmaPlugin::Scaled, SigmaPlugin::Oracle),
        ..Default::default()
    };
    let config = json!({
        "command": "test",
        "args": a,
        "scaled": scaled,
        "projection": projection,
        "test": {
            "alpha": test_opts.alpha,
            "large_group_cutoff": test_opts.large_group_cutoff,
            "sigma": format!("{:?}", test_opts.sigma),
        },
    });
    let fit = fit_scaled(&problem, &scaled)?;
    let bundle = relaxed_projection(
        &problem.x,
        &problem.partition,
        &target,
        &problem.weights,
        &projection,
    )?;
    let omega_prime = bundle.implied_omega_prime(problem.partition.num_groups());
    let feas = feasibility_report(&bundle, &omega_prime);
    let group_1based: Vec<usize> = target.iter().map(|i| i + 1).collect();
    let mut out = json!({
        "config": config,
        "group": group_1based,
        "k_G": bundle.k_g(),
        "gap": bundle.gap,
        "tau": bundle.tau,
        "eta_G": feas.eta_g,
        "feasible": feas.feasible,
        "feasibility": feas,
        "sigma": fit.sigma,
        "fit_converged": fit.converged,
        "projection_converged": bundle.converged,
    });
    if !feas.feasible {
        write_json(&a.out, &out)?;
        eprintln!(
            "projection infeasible: gap {:.4}, worst bias ratio {:.4}",
            feas.gap, feas.worst_ratio
        );
        return Ok(EXIT_INFEASIBLE);
    }
    if !fit.converged {
        write_json(&a.out, &out)?;
        eprintln!("scaled group Lasso did not converge; no test performed");
        return Ok(EXIT_NONCONVERGENCE);
    }
    let r = match group_test(&problem, &bundle, &fit, &test_opts) {
        Ok(r) => r,
        Err(e) => {
            write_json(&a.out, &out)?;
            return Err(e.into());
        }
    };
    out["T"] = json!(r.t);
    out["p_value"] = json!(r.p_value);
    out["method"] = json!(r.method);
    out["ellipsoid_radius"] = json!(r.ellipsoid_radius);
    out["beta_G_hat"] = json!(r.beta_g_hat);
    out["sigma_used"] = json!(r.sigma_used);
    out["reject"] = json!(r.reject);
    write_json(&a.out, &out)?;
    Ok(EXIT_OK)
}

fn resolve_scenario(a: &SimulateArgs) -> std::result::Result<(SimDesign, MethodConfig), Failure> {
    let (mut design, mut method) = match (&a.preset, &a.spec) {
        (Some(name), _) => {
            let name = match (name.as_str(), a.slow) {
                ("sigma", false) => "sigma-p200",
                ("sigma", true) => "sigma-p2000",
                (other, _) => other,
            };
            if name == "sigma-p2000" && !a.slow {
                return Err(Failure::input("the p = 2000 study needs --slow"));
            }
            preset(name).ok_or_else(|| {
                Failure::input(format!(
                    "unknown preset {name:?}; known: sigma, {}",
                    PRESET_NAMES.join(", ")
                ))
            })?
        }
        (None, Some(spec)) => {
            let text = match spec.strip_prefix('@') {
                Some(p) => {
                    fs::read_to_string(p).map_err(|e| Failure::input(format!("{p}: {e}")))?
                }
                None => spec.clone(),
            };
            let design: SimDesign = serde_json::from_str(&text)
                .map_err(|e| Failure::input(format!("design spec: {e}")))?;
            (design, MethodConfig::default())
        }
        (None, None) => return Err(Failure::input("give --preset or --spec")),
    };
    if let Some(seed) = a.seed {
        design.seed = seed;
    }
    if let Some(s) = a.weights_scale {
        method.weight_scale = s;
    }
    method.projection.xi = a.xi;
    method.projection.penalty = a.penalty;
    method.alpha = a.alpha;
    method.oracle_sigma = a.oracle_sigma;
    if !(method.alpha > 0.0 && method.alpha < 1.0) {
        return Err(Failure::input(format!(
            "alpha must lie in (0, 1), got {}",
            a.alpha
        )));
    }
    design.validate()?;
    Ok((design, method))
}

fn qq_path(out: &Path, series: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "summary".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.qq_{series}.csv"))
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult {
    let (design, method) = resolve_scenario(a)?;
    if a.reps == 0 {
        return Err(Failure::input("--reps must be at least 1"));
    }
    let run = || run_replications(&design, &method, a.reps, true);
    let summary = match a.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Failure::input(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let mut out = serde_json::to_value(&summary).expect("summary serializes");
    out["config"] = json!({ "command": "simulate", "args": a, "design": design, "method": method });
    write_json(&a.out, &out)?;
    for (series, pairs) in [
        ("sigma_z", &summary.qq_sigma_z),
        ("null_chisq", &summary.qq_null_chisq),
        ("null_normal", &summary.qq_null_normal),
        ("pivot_chisq", &summary.qq_pivot_chisq),
    ] {
        if !pairs.is_empty() {
            write_text(&qq_path(&a.out, series), &qq_csv(pairs))?;
        }
    }
    if let Some(dir) = &a.emit_dir {
        let data = generate(&design, 0)?;
        write_problem_files(dir, &data.x, &data.y, &data.partition)?;
    }
    Ok(EXIT_OK)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<Vec<T>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Failure::input(format!("bad {what} {t:?}")))
        })
        .collect()
}

fn cmd_diagnose(a: &DiagnoseArgs) -> CliResult {
    if a.budget == 0 {
        return Err(Failure::input("--budget must be at least 1"));
    }
    let x = read_matrix(&a.design)?;
    let partition = read_partition(&a.groups)?;
    if partition.num_vars() != x.ncols() {
        return Err(Failure::input(format!(
            "design has {} columns but groups lists {}",
            x.ncols(),
            partition.num_vars()
        )));
    }
    let m = partition.num_groups();
    let support: Vec<usize> = parse_list::<usize>(&a.support, "group id")?
        .into_iter()
        .map(|j| {
            if j == 0 || j > m {
                Err(Failure::input(format!("group {j} outside 1..={m}")))
            } else {
                Ok(j - 1)
            }
        })
        .collect::<std::result::Result<_, _>>()?;
    let xis: Vec<f64> = parse_list(&a.xi, "xi")?;
    if xis.is_empty() {
        return Err(Failure::input("no xi given"));
    }
    let weights = default_weights(&partition, x.nrows(), a.weights_scale)?;
    let ctx = ConeContext::new(&x, &partition, &weights, &support, None)?;
    let reports = estimate_all_path(&ctx, &xis, a.budget, a.seed)?;
    let ordering_holds = reports
        .iter()
        .all(|r| r.ordering_holds && r.ordering_violations == 0);
    let out = json!({
        "config": { "command": "diagnose", "args": a, "weights": weights },
        "ordering_holds": ordering_holds,
        "reports": reports,
    });
    write_json(&a.out, &out)?;
    Ok(EXIT_OK)
}
