//! De-biased group estimates, chi-squared group tests and confidence
//! ellipsoids built from a scaled fit and a relaxed projection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::RegressionProblem;
use crate::numerics::{pinv_apply, range_basis, singular_values};
use crate::projection::{feasibility_report, FeasibilityReport, ProjectionBundle};
use crate::scaled::ScaledFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Chisq,
    NormalApprox,
}

/// Noise level plugged into the test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmaPlugin {
    /// The scaled group Lasso estimate.
    #[default]
    Scaled,
    /// A known noise level, for validation runs.
    Oracle(f64),
    /// `sqrt(RSS / (n - p))` of the full least-squares fit; needs `p < n`.
    DegreesAdjusted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestOptions {
    pub alpha: f64,
    /// Groups with `k_G` at or above this use the normal approximation.
    pub large_group_cutoff: usize,
    pub sigma: SigmaPlugin,
    /// Per-group bias bounds `omega'_k`; defaults to the bound implied by
    /// the projection's dual certificate.
    pub omega_prime: Option<Vec<f64>>,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            large_group_cutoff: 50,
            sigma: SigmaPlugin::Scaled,
            omega_prime: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupInferenceResult {
    pub group: Vec<usize>,
    pub beta_g_hat: Vec<f64>,
    #[serde(rename = "T")]
    pub t: f64,
    pub k_g: usize,
    pub p_value: f64,
    pub method: TestMethod,
    pub sigma_used: f64,
    pub alpha: f64,
    pub ellipsoid_radius: f64,
    pub reject: bool,
    pub feasibility: FeasibilityReport,
    pub tau: f64,
}

fn check_init(problem: &RegressionProblem, init_beta: &DVector<f64>) -> Result<()> {
    if init_beta.len() != problem.p() {
        return Err(Error::DimensionMismatch(format!(
            "initial estimate has length {}, p = {}",
            init_beta.len(),
            problem.p()
        )));
    }
    Ok(())
}

fn check_bundle(problem: &RegressionProblem, bundle: &ProjectionBundle) -> Result<()> {
    if bundle.z.nrows() != problem.n() {
        return Err(Error::DimensionMismatch(format!(
            "projection built for n = {}, problem has n = {}",
            bundle.z.nrows(),
            problem.n()
        )));
    }
    Ok(())
}

/// `beta_G^init + (P_G X_G)^+ P_G (y - X beta^init)`.
pub fn debias_beta(
    init_beta: &DVector<f64>,
    problem: &RegressionProblem,
    bundle: &ProjectionBundle,
) -> Result<DVector<f64>> {
    check_init(problem, init_beta)?;
    check_bundle(problem, bundle)?;
    let g = &bundle.target;
    let xg = problem.columns(g);
    // Work in the coordinates of range(Z): U^T (P_G X_G) = U^T X_G.
    let coords = bundle.basis.coords(&xg);
    let full_rank = bundle.basis.rank() >= g.len() && {
        let sv = singular_values(&coords);
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        sv.iter()
            .filter(|&&s| s > bundle.rank_tol * smax && s > 0.0)
            .count()
            == g.len()
    };
    if !full_rank {
        return Err(Error::RankDeficient(format!(
            "P_G X_G has rank below |G| = {}: some direction of the group receives no bias correction",
            g.len()
        )));
    }
    let resid = &problem.y - &problem.x * init_beta;
    let rhs = bundle.basis.matrix().tr_mul(&resid);
    let correction = pinv_apply(&coords, &rhs, bundle.rank_tol)?;
    Ok(DVector::from_iterator(g.len(), g.iter().map(|&i| init_beta[i])) + correction)
}

/// `X_G beta_G^init + (P_G Q_G)^+ P_G (y - X beta^init)`.
pub fn debias_mu(
    init_beta: &DVector<f64>,
    problem: &RegressionProblem,
    bundle: &ProjectionBundle,
) -> Result<DVector<f64>> {
    check_init(problem, init_beta)?;
    check_bundle(problem, bundle)?;
    let g = &bundle.target;
    let xg = problem.columns(g);
    let qg = range_basis(&xg, bundle.rank_tol);
    if qg.rank() != bundle.basis.rank() {
        return Err(Error::RankDeficient(format!(
            "rank(P_G) = {} differs from rank(X_G) = {}",
            bundle.basis.rank(),
            qg.rank()
        )));
    }
    let beta_g = DVector::from_iterator(g.len(), g.iter().map(|&i| init_beta[i]));
    let resid = &problem.y - &problem.x * init_beta;
    // (U_Z C U_G^T)^+ = U_G C^+ U_Z^T with C = U_Z^T U_G.
    let c = bundle.basis.matrix().tr_mul(qg.matrix());
    let rhs = bundle.basis.matrix().tr_mul(&resid);
    let inner = pinv_apply(&c, &rhs, bundle.rank_tol)?;
    Ok(&xg * beta_g + qg.matrix() * inner)
}

/// `y - sum_k mu^init_{G_k \ G}`, with `Q_{G_k \ G} X_{G_k} beta^init_{G_k}` in
/// place of `X_{G_k \ G} beta^init_{G_k \ G}` for straddled groups after
/// reparametrization.
pub fn adjusted_response(
    problem: &RegressionProblem,
    bundle: &ProjectionBundle,
    init_beta: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_init(problem, init_beta)?;
    check_bundle(problem, bundle)?;
    let mut v = problem.y.clone();
    for o in &bundle.outside {
        if bundle.reparametrized && o.straddling {
            let gk = problem.partition.group(o.group);
            let b = DVector::from_iterator(gk.len(), gk.iter().map(|&i| init_beta[i]));
            v -= o.basis.project(&(problem.columns(gk) * b))?;
        } else {
            let b = DVector::from_iterator(
                o.remainder.len(),
                o.remainder.iter().map(|&i| init_beta[i]),
            );
            v -= problem.columns(&o.remainder) * b;
        }
    }
    Ok(v)
}

/// `Rem_G = sum_k P_G (mu^init_{G_k \ G} - mu*_{G_k \ G})`, available when the
/// truth is known.
pub fn bias_remainder(
    problem: &RegressionProblem,
    bundle: &ProjectionBundle,
    init_beta: &DVector<f64>,
    beta_star: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_init(problem, init_beta)?;
    check_init(problem, beta_star)?;
    let h = init_beta - beta_star;
    let mut acc = DVector::zeros(problem.n());
    for o in &bundle.outside {
        let hk = DVector::from_iterator(o.remainder.len(), o.remainder.iter().map(|&i| h[i]));
        acc += problem.columns(&o.remainder) * hk;
    }
    bundle.basis.project(&acc)
}

/// `sqrt(||y - X b_ols||^2 / (n - p))`.
pub fn degrees_adjusted_sigma(problem: &RegressionProblem) -> Result<f64> {
    let (n, p) = (problem.n(), problem.p());
    if p >= n {
        return Err(Error::InvalidArgument(format!(
            "degrees-adjusted noise level needs p < n, got p = {p}, n = {n}"
        )));
    }
    let q = range_basis(&problem.x, crate::numerics::DEFAULT_RANK_TOL);
    let df = n - q.rank();
    let rss = q.residual(&problem.y)?.norm_squared();
    Ok((rss / df as f64).sqrt())
}

/// Upper-tail p-value of `t2` under `chi^2_k`, or under the normal
/// approximation `(t2 - k) / sqrt(2k) ~ N(0, 1)` when `k >= cutoff`.
pub fn p_value(t2: f64, k: usize, cutoff: usize) -> (f64, TestMethod) {
    if k == 0 {
        return (1.0, TestMethod::Chisq);
    }
    if k >= cutoff {
        let z = (t2 - k as f64) / (2.0 * k as f64).sqrt();
        let normal = Normal::standard();
        (
            (1.0 - normal.cdf(z)).clamp(0.0, 1.0),
            TestMethod::NormalApprox,
        )
    } else {
        let chi = ChiSquared::new(k as f64).expect("positive degrees of freedom");
        (chi.sf(t2).clamp(0.0, 1.0), TestMethod::Chisq)
    }
}

/// `chi^2_{k, 1 - alpha}` quantile.
pub fn chi2_quantile(k: usize, alpha: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    ChiSquared::new(k as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha)
}

/// Tests `H_0: beta_G = 0` at level `alpha` and builds the confidence ellipsoid.
///
/// Refuses to test when the projection fails its feasibility gate.
pub fn group_test(
    problem: &RegressionProblem,
    bundle: &ProjectionBundle,
    init: &ScaledFit,
    opts: &TestOptions,
) -> Result<GroupInferenceResult> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "level must lie in (0, 1), got {}",
            opts.alpha
        )));
    }
    if !init.converged {
        return Err(Error::InvalidArgument(
            "initial scaled fit did not converge".into(),
        ));
    }
    let omega_prime = opts
        .omega_prime
        .clone()
        .unwrap_or_else(|| bundle.implied_omega_prime(problem.partition.num_groups()));
    let feasibility = feasibility_report(bundle, &omega_prime);
    if !feasibility.feasible {
        return Err(Error::Infeasible(format!(
            "gap {:.4}, rank_ok {}, worst bias ratio {:.4} at group {:?}",
            feasibility.gap, feasibility.rank_ok, feasibility.worst_ratio, feasibility.worst_group
        )));
    }
    let sigma = match opts.sigma {
        SigmaPlugin::Scaled => init.sigma,
        SigmaPlugin::Oracle(s) => s,
        SigmaPlugin::DegreesAdjusted => degrees_adjusted_sigma(problem)?,
    };
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise level must be positive, got {sigma}"
        )));
    }
    let v = adjusted_response(problem, bundle, &init.beta)?;
    let u = bundle.basis.matrix();
    let coords_v = u.tr_mul(&v);
    let t = coords_v.norm() / sigma;
    let k_g = bundle.k_g();
    let (p, method) = p_value(t * t, k_g, opts.large_group_cutoff);
    let beta_g_hat = pinv_apply(&bundle.projected_design(), &coords_v, bundle.rank_tol)?;
    Ok(GroupInferenceResult {
        group: bundle.target.clone(),
        beta_g_hat: beta_g_hat.iter().copied().collect(),
        t,
        k_g,
        p_value: p,
        method,
        sigma_used: sigma,
        alpha: opts.alpha,
        ellipsoid_radius: sigma * chi2_quantile(k_g, opts.alpha).sqrt(),
        reject: p < opts.alpha,
        feasibility,
        tau: bundle.tau,
    })
}

/// `||P_G X_G (beta_G_hat - candidate)|| / sigma_used`: the radius at which
/// `candidate` sits in the family of ellipsoids.
pub fn standardized_distance(
    result: &GroupInferenceResult,
    bundle: &ProjectionBundle,
    candidate: &DVector<f64>,
) -> Result<f64> {
    if candidate.len() != result.beta_g_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "candidate has length {}, group has {}",
            candidate.len(),
            result.beta_g_hat.len()
        )));
    }
    let diff = DVector::from_column_slice(&result.beta_g_hat) - candidate;
    Ok((bundle.projected_design() * diff).norm() / result.sigma_used)
}

/// Whether `candidate` lies in `{b : ||P_G X_G (beta_G_hat - b)|| <= radius}`.
pub fn confidence_region_contains(
    result: &GroupInferenceResult,
    bundle: &ProjectionBundle,
    candidate: &DVector<f64>,
) -> Result<bool> {
    let d = standardized_distance(result, bundle, candidate)? * result.sigma_used;
    Ok(d <= result.ellipsoid_radius * (1.0 + 1e-12))
}

/// `P_G X_G` as an explicit `n x |G|` matrix.
pub fn projected_group_design(bundle: &ProjectionBundle) -> DMatrix<f64> {
    bundle.basis.matrix() * bundle.projected_design()
}
