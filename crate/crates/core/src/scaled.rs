//! Scaled group Lasso: joint estimation of the coefficients and the noise
//! level by alternating a noise update with a group Lasso solve at penalty
//! `sigma * omega`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group_lasso::{group_norm, GroupLassoOptions, GroupLassoSolver};
use crate::model::RegressionProblem;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaledOptions {
    pub max_outer: usize,
    /// Relative tolerance on successive noise estimates.
    pub conv_tol: f64,
    /// Defaults to `1e-10 * ||y|| / sqrt(n)`.
    pub sigma_floor: Option<f64>,
    /// Defaults to `||y|| / sqrt(n)`.
    pub sigma_init: Option<f64>,
    /// Degrees-of-freedom adjustment `a` in `||y - X b|| / sqrt((1 - a) n)`.
    pub dof_adjust: f64,
    /// Inner KKT tolerance, relative to `||y|| / sqrt(n)`.
    pub inner_kkt_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for ScaledOptions {
    fn default() -> Self {
        Self {
            max_outer: 100,
            conv_tol: 1e-6,
            sigma_floor: None,
            sigma_init: None,
            dof_adjust: 0.0,
            inner_kkt_tol: 1e-9,
            inner_max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScaledFit {
    pub beta: DVector<f64>,
    pub sigma: f64,
    /// `(sigma_k, L_omega(beta(sigma_k omega), sigma_k))` per outer step.
    pub trace: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

/// Joint objective `||y - X b||^2 / (2 n sigma) + (1 - a) sigma / 2 + sum_j w_j ||b_j||`.
pub fn joint_objective(
    problem: &RegressionProblem,
    beta: &DVector<f64>,
    sigma: f64,
    dof_adjust: f64,
) -> f64 {
    let n = problem.n() as f64;
    let rss = (&problem.y - &problem.x * beta).norm_squared();
    let pen: f64 = problem
        .partition
        .groups()
        .iter()
        .zip(&problem.weights)
        .map(|(g, w)| w * group_norm(beta, g))
        .sum();
    rss / (2.0 * n * sigma) + (1.0 - dof_adjust) * sigma / 2.0 + pen
}

fn inner_opts(opts: &ScaledOptions, y_scale: f64, warm: DVector<f64>) -> GroupLassoOptions {
    GroupLassoOptions {
        max_iter: opts.inner_max_iter,
        kkt_tol: opts.inner_kkt_tol * y_scale,
        warm_start: Some(warm),
    }
}

/// Alternates `sigma <- ||y - X b|| / sqrt((1 - a) n)` and
/// `b <- argmin L_{sigma omega}(b)` until the noise estimate settles.
///
/// The returned pair satisfies `b = b(sigma omega)`; convergence is declared
/// once the next noise update changes `sigma^2` by at most `conv_tol`
/// relative, which bounds the profile derivative by `conv_tol / 2`.
pub fn fit_scaled(problem: &RegressionProblem, opts: &ScaledOptions) -> Result<ScaledFit> {
    let n = problem.n() as f64;
    if !(0.0..1.0).contains(&opts.dof_adjust) {
        return Err(Error::InvalidArgument(format!(
            "degrees-of-freedom adjustment must lie in [0, 1), got {}",
            opts.dof_adjust
        )));
    }
    let y_scale = problem.y.norm() / n.sqrt();
    let floor = opts.sigma_floor.unwrap_or(1e-10 * y_scale);
    let mut sigma = opts
        .sigma_init
        .unwrap_or(y_scale / (1.0 - opts.dof_adjust).sqrt());
    if !(sigma > floor) {
        return Err(Error::DegenerateScale { sigma, floor });
    }
    let solver = GroupLassoSolver::new(problem)?;
    let denom = ((1.0 - opts.dof_adjust) * n).sqrt();
    let mut beta = DVector::zeros(problem.p());
    let mut trace = Vec::new();
    let mut kkt_residual = f64::INFINITY;
    for k in 1..=opts.max_outer {
        let penalties: Vec<f64> = problem.weights.iter().map(|w| sigma * w).collect();
        let fit = solver.solve(&penalties, &inner_opts(opts, y_scale, beta.clone()))?;
        beta = fit.beta;
        kkt_residual = fit.kkt_residual;
        trace.push((
            sigma,
            joint_objective(problem, &beta, sigma, opts.dof_adjust),
        ));
        let next = (&problem.y - &problem.x * &beta).norm() / denom;
        if !(next > floor) {
            return Err(Error::DegenerateScale { sigma: next, floor });
        }
        let ratio = next / sigma;
        let settled =
            (ratio - 1.0).abs() <= opts.conv_tol && (1.0 - ratio * ratio).abs() <= opts.conv_tol;
        log::trace!("scaled iteration {k}: sigma {sigma:.8} -> {next:.8}");
        if settled {
            return Ok(ScaledFit {
                beta,
                sigma,
                trace,
                iterations: k,
                converged: fit.converged,
                kkt_residual,
            });
        }
        sigma = next;
    }
    log::debug!(
        "scaled group lasso did not settle in {} steps",
        opts.max_outer
    );
    Ok(ScaledFit {
        beta,
        sigma,
        trace,
        iterations: opts.max_outer,
        converged: false,
        kkt_residual,
    })
}

/// `1/2 - ||y - X b(sigma omega)||^2 / (2 n sigma^2)`: the derivative of the
/// profile objective in `sigma`.
pub fn profile_derivative(
    problem: &RegressionProblem,
    sigma: f64,
    opts: &ScaledOptions,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let n = problem.n() as f64;
    let y_scale = problem.y.norm() / n.sqrt();
    let solver = GroupLassoSolver::new(problem)?;
    let penalties: Vec<f64> = problem.weights.iter().map(|w| sigma * w).collect();
    let fit = solver.solve(
        &penalties,
        &inner_opts(
            opts,
            y_scale.max(f64::MIN_POSITIVE),
            DVector::zeros(problem.p()),
        ),
    )?;
    let rss = (&problem.y - &problem.x * &fit.beta).norm_squared();
    Ok(0.5 - rss / (2.0 * n * sigma * sigma))
}

/// `sqrt(2n) (sigma_hat / sigma_true - 1)`, asymptotically standard normal.
pub fn sigma_z_statistic(fit: &ScaledFit, sigma_true: f64, n: usize) -> f64 {
    (2.0 * n as f64).sqrt() * (fit.sigma / sigma_true - 1.0)
}
