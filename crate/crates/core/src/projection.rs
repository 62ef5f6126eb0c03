//! Relaxed projections for a group of columns.
//!
//! The score matrix `Z = X_G - sum_k X_{G_k \ G} Gamma_k` comes from a
//! penalized multivariate regression of the target columns on the part of
//! every other group lying outside `G`. The penalty acts on the fitted blocks
//! `X_{G_k \ G} Gamma_k`, so writing `X_{G_k \ G} Gamma_k = sqrt(n) U_k B_k`
//! with `U_k` an orthonormal basis of the block's range turns it into a
//! penalty on `B_k` alone. Block coordinate descent then has an exact
//! proximal step per block: a matrix soft-threshold for the Frobenius
//! penalty and singular-value soft-thresholding for the nuclear penalty.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{default_weights, GroupPartition};
use crate::numerics::{
    checked_svd, min_singular_value, pinv, range_basis, range_basis_with_floor, singular_values,
    spectral_norm, OrthoBasis, DEFAULT_RANK_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    #[default]
    Frobenius,
    Nuclear,
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "frobenius" | "fro" => Ok(Self::Frobenius),
            "nuclear" => Ok(Self::Nuclear),
            other => Err(Error::InvalidArgument(format!(
                "unknown penalty kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionOptions {
    pub penalty: PenaltyKind,
    /// Relaxation multiplier. Zero gives exact orthogonalization against all
    /// columns outside `G`.
    pub xi: f64,
    pub max_iter: usize,
    /// Fixed-point tolerance on block updates, relative to `||X_G||_F / sqrt(n)`.
    pub tol: f64,
    pub rank_tol: f64,
    /// Residualize straddled groups first. `None` does so exactly when some
    /// group straddles `G`.
    pub reparametrize: Option<bool>,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            penalty: PenaltyKind::Frobenius,
            xi: 1.0,
            max_iter: 10_000,
            tol: 1e-11,
            rank_tol: DEFAULT_RANK_TOL,
            reparametrize: None,
        }
    }
}

/// A group `G_k` not contained in `G`, seen from the projection for `G`.
#[derive(Debug, Clone)]
pub struct OutsideGroup {
    pub group: usize,
    /// `G_k \ G`.
    pub remainder: Vec<usize>,
    pub straddling: bool,
    /// Penalty level `xi * omega''_k`.
    pub xi_omega: f64,
    /// `||P_G Q_{G_k \ G}||_S`.
    pub bias: f64,
    /// `||P_G Q_{G_k}||_S`.
    pub whole_overlap: f64,
    /// `max ||X_{G_k \ G} u_{G_k \ G}|| over ||X_{G_k} u|| = 1`.
    pub m_factor: f64,
    /// `||Q_{G_k \ G} Z / sqrt(n)||` in the dual norm of the penalty
    /// (Frobenius or spectral).
    pub dual_norm: f64,
    /// Scale-one default weight of the group.
    pub omega_star: f64,
    pub(crate) basis: OrthoBasis,
}

/// Score matrix, its projection and the feasibility diagnostics for one `G`.
#[derive(Debug, Clone)]
pub struct ProjectionBundle {
    /// Sorted variable indices of `G`.
    pub target: Vec<usize>,
    /// Columns the score was built from: `X_G`, or the reparametrized `X~_G`.
    pub target_design: DMatrix<f64>,
    pub z: DMatrix<f64>,
    /// Basis of `range(Z)`, i.e. `P_G`.
    pub basis: OrthoBasis,
    /// Basis of `range(target_design)`.
    pub group_basis: OrthoBasis,
    /// `||P_G Q_G^perp||_S`; 1 when the ranks of `P_G` and `Q_G` differ.
    pub gap: f64,
    /// `||(P_G Q_G)^+||_S`.
    pub tau: f64,
    pub rank_ok: bool,
    pub outside: Vec<OutsideGroup>,
    pub penalty_kind: PenaltyKind,
    pub xi: f64,
    pub reparametrized: bool,
    /// `max_k (dual_norm_k - xi omega''_k)`; non-positive up to solver accuracy.
    pub dual_violation: f64,
    /// `||(Z^T Z / n)^{-1/2}||_S`.
    pub z_inverse_scale: f64,
    pub iterations: usize,
    pub converged: bool,
    pub(crate) rank_tol: f64,
}

impl ProjectionBundle {
    pub fn k_g(&self) -> usize {
        self.basis.rank()
    }

    /// `(k, ||P_G Q_{G_k \ G}||_S)` for every group not inside `G`.
    pub fn group_bias(&self) -> Vec<(usize, f64)> {
        self.outside.iter().map(|o| (o.group, o.bias)).collect()
    }

    pub fn xi_omega(&self) -> Vec<(usize, f64)> {
        self.outside.iter().map(|o| (o.group, o.xi_omega)).collect()
    }

    /// `P_G` applied to a vector.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.basis.project(v)
    }

    /// Coordinates `U_Z^T D` of the projected target design.
    pub fn projected_design(&self) -> DMatrix<f64> {
        self.basis.coords(&self.target_design)
    }

    /// Bias bounds implied by the dual certificate:
    /// `||P_G Q_k|| <= ||Q_k Z / sqrt(n)||_S ||(Z^T Z / n)^{-1/2}||_S <= xi omega''_k ||(Z^T Z/n)^{-1/2}||_S`.
    pub fn implied_omega_prime(&self, m: usize) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; m];
        for o in &self.outside {
            out[o.group] = o.xi_omega * self.z_inverse_scale;
        }
        out
    }

    /// Builds the bundle for a given score matrix. Any `Z` with the same
    /// column space gives the same projection and diagnostics.
    #[allow(clippy::too_many_arguments)]
    pub fn from_score(
        x: &DMatrix<f64>,
        partition: &GroupPartition,
        target: &[usize],
        z: DMatrix<f64>,
        omega2: &[f64],
        opts: &ProjectionOptions,
    ) -> Result<Self> {
        let setup = Setup::new(x, partition, target, omega2, opts)?;
        if z.shape() != setup.design.shape() {
            return Err(Error::DimensionMismatch(format!(
                "score matrix is {}x{}, expected {}x{}",
                z.nrows(),
                z.ncols(),
                setup.design.nrows(),
                setup.design.ncols()
            )));
        }
        Ok(setup.finish(x, partition, z, opts, 0, true))
    }
}

/// Reparametrized target columns for a `G` that cuts through groups.
#[derive(Debug, Clone)]
pub struct ReparamDesign {
    pub target: Vec<usize>,
    /// `X~_G`: each straddled block `X_{G_k cap G}` residualized against `X_{G_k \ G}`.
    pub x_tilde: DMatrix<f64>,
    pub straddling: Vec<usize>,
    /// `(k, basis of range(X_{G_k \ G}))` for every straddled group.
    pub remainder_bases: Vec<(usize, OrthoBasis)>,
    pub(crate) coupling: Vec<Coupling>,
}

/// `beta~_{G_k \ G} = beta_{G_k \ G} + A_k beta_{G_k cap G}` with
/// `A_k = X_{G_k \ G}^+ X_{G_k cap G}`.
#[derive(Debug, Clone)]
pub(crate) struct Coupling {
    rest: Vec<usize>,
    cap: Vec<usize>,
    a: DMatrix<f64>,
}

impl ReparamDesign {
    /// Coefficients in the reparametrized model, where `X~ beta~ = X beta`.
    pub fn to_tilde(&self, beta: &DVector<f64>) -> DVector<f64> {
        shift_coefficients(&self.coupling, beta, 1.0)
    }

    pub fn to_original(&self, beta_tilde: &DVector<f64>) -> DVector<f64> {
        shift_coefficients(&self.coupling, beta_tilde, -1.0)
    }

    /// Full design with the `G` columns replaced by `X~_G`.
    pub fn full_design(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (c, &j) in self.target.iter().enumerate() {
            out.set_column(j, &self.x_tilde.column(c));
        }
        out
    }
}

fn shift_coefficients(coupling: &[Coupling], beta: &DVector<f64>, sign: f64) -> DVector<f64> {
    let mut out = beta.clone();
    for c in coupling {
        let cap = DVector::from_iterator(c.cap.len(), c.cap.iter().map(|&i| beta[i]));
        let shift = &c.a * cap * sign;
        for (r, &i) in c.rest.iter().enumerate() {
            out[i] += shift[r];
        }
    }
    out
}

fn check_target(partition: &GroupPartition, target: &[usize]) -> Result<Vec<usize>> {
    if target.is_empty() {
        return Err(Error::InvalidArgument("tested group is empty".into()));
    }
    let mut g = target.to_vec();
    g.sort_unstable();
    g.dedup();
    if g.len() != target.len() {
        return Err(Error::InvalidArgument(
            "tested group repeats an index".into(),
        ));
    }
    if let Some(&last) = g.last() {
        if last >= partition.num_vars() {
            return Err(Error::InvalidArgument(format!(
                "index {last} out of range for p = {}",
                partition.num_vars()
            )));
        }
    }
    Ok(g)
}

/// Residualizes every straddled block of `G` against the rest of its group.
pub fn reparametrize(
    x: &DMatrix<f64>,
    partition: &GroupPartition,
    target: &[usize],
) -> Result<ReparamDesign> {
    reparametrize_with_tol(x, partition, target, DEFAULT_RANK_TOL)
}

fn reparametrize_with_tol(
    x: &DMatrix<f64>,
    partition: &GroupPartition,
    target: &[usize],
    rank_tol: f64,
) -> Result<ReparamDesign> {
    if x.ncols() != partition.num_vars() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns, partition covers {}",
            x.ncols(),
            partition.num_vars()
        )));
    }
    let g = check_target(partition, target)?;
    let in_g = membership_mask(partition.num_vars(), &g);
    let mut x_tilde = x.select_columns(&g);
    let mut straddling = Vec::new();
    let mut remainder_bases = Vec::new();
    let mut coupling = Vec::new();
    for (k, gk) in partition.groups().iter().enumerate() {
        let (cap, rest): (Vec<usize>, Vec<usize>) = gk.iter().partition(|&&i| in_g[i]);
        if cap.is_empty() || rest.is_empty() {
            continue;
        }
        let xr = x.select_columns(&rest);
        let xc = x.select_columns(&cap);
        let basis = range_basis(&xr, rank_tol);
        let resid = basis.residual_matrix(&xc);
        for (c, &i) in cap.iter().enumerate() {
            let pos = g.binary_search(&i).expect("cap index lies in G");
            x_tilde.set_column(pos, &resid.column(c));
        }
        coupling.push(Coupling {
            a: pinv(&xr, rank_tol) * &xc,
            rest,
            cap,
        });
        straddling.push(k);
        remainder_bases.push((k, basis));
    }
    Ok(ReparamDesign {
        target: g,
        x_tilde,
        straddling,
        remainder_bases,
        coupling,
    })
}

fn membership_mask(p: usize, idx: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; p];
    for &i in idx {
        mask[i] = true;
    }
    mask
}

struct Block {
    group: usize,
    remainder: Vec<usize>,
    straddling: bool,
    xi_omega: f64,
    basis: OrthoBasis,
}

struct Setup {
    target: Vec<usize>,
    design: DMatrix<f64>,
    reparametrized: bool,
    blocks: Vec<Block>,
}

impl Setup {
    fn new(
        x: &DMatrix<f64>,
        partition: &GroupPartition,
        target: &[usize],
        omega2: &[f64],
        opts: &ProjectionOptions,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if p != partition.num_vars() {
            return Err(Error::DimensionMismatch(format!(
                "design has {p} columns, partition covers {}",
                partition.num_vars()
            )));
        }
        if omega2.len() != partition.num_groups() {
            return Err(Error::DimensionMismatch(format!(
                "{} projection weights for {} groups",
                omega2.len(),
                partition.num_groups()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design contains NaN or Inf".into()));
        }
        if !(opts.xi >= 0.0) || !opts.xi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "relaxation xi must be finite and non-negative, got {}",
                opts.xi
            )));
        }
        let g = check_target(partition, target)?;
        if g.len() >= n {
            return Err(Error::InvalidArgument(format!(
                "tested group has {} variables but n = {n}",
                g.len()
            )));
        }
        let in_g = membership_mask(p, &g);
        let straddles = partition.groups().iter().any(|gk| {
            let inside = gk.iter().filter(|&&i| in_g[i]).count();
            inside > 0 && inside < gk.len()
        });
        let reparametrized = opts.reparametrize.unwrap_or(straddles) && straddles;
        let design = if reparametrized {
            reparametrize_with_tol(x, partition, &g, opts.rank_tol)?.x_tilde
        } else {
            x.select_columns(&g)
        };
        let mut blocks = Vec::new();
        for (k, gk) in partition.groups().iter().enumerate() {
            let remainder: Vec<usize> = gk.iter().copied().filter(|&i| !in_g[i]).collect();
            if remainder.is_empty() {
                continue;
            }
            let w = omega2[k];
            if opts.xi > 0.0 && !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "projection weight of group {k} must be positive, got {w}"
                )));
            }
            blocks.push(Block {
                group: k,
                straddling: remainder.len() < gk.len(),
                basis: range_basis(&x.select_columns(&remainder), opts.rank_tol),
                remainder,
                xi_omega: opts.xi * w,
            });
        }
        Ok(Self {
            target: g,
            design,
            reparametrized,
            blocks,
        })
    }

    fn finish(
        self,
        x: &DMatrix<f64>,
        partition: &GroupPartition,
        z: DMatrix<f64>,
        opts: &ProjectionOptions,
        iterations: usize,
        converged: bool,
    ) -> ProjectionBundle {
        let n = x.nrows();
        let sqrt_n = (n as f64).sqrt();
        let design_norm = spectral_norm(&self.design);
        let basis = range_basis_with_floor(&z, opts.rank_tol, design_norm);
        let group_basis = range_basis(&self.design, opts.rank_tol);
        let kz = basis.rank();
        let kg = group_basis.rank();

        let (gap, tau) = if kz == 0 || kz != kg {
            (1.0, f64::INFINITY)
        } else {
            let c = basis.matrix().tr_mul(group_basis.matrix());
            let off = group_basis.residual_matrix(basis.matrix());
            let smin = min_singular_value(&c);
            let tau = if smin > 0.0 {
                1.0 / smin
            } else {
                f64::INFINITY
            };
            (spectral_norm(&off).min(1.0), tau)
        };

        let rank_ok = kz >= self.target.len() && {
            let pd = basis.coords(&self.design);
            let sv = singular_values(&pd);
            let cutoff = opts.rank_tol * design_norm;
            sv.iter().filter(|&&s| s > cutoff).count() == self.target.len()
        };

        let z_inverse_scale = {
            let smin = if z.ncols() > 0 {
                min_singular_value(&z)
            } else {
                0.0
            };
            if smin > 0.0 {
                sqrt_n / smin
            } else {
                f64::INFINITY
            }
        };

        let omega_star = default_weights(partition, n, 1.0).unwrap_or_else(|_| vec![1.0; 0]);
        let mut outside = Vec::with_capacity(self.blocks.len());
        let mut dual_violation = f64::NEG_INFINITY;
        for b in self.blocks {
            let overlap = |other: &OrthoBasis| -> f64 {
                if kz == 0 || other.rank() == 0 {
                    0.0
                } else {
                    spectral_norm(&basis.matrix().tr_mul(other.matrix()))
                }
            };
            let bias = overlap(&b.basis);
            let gk = partition.group(b.group);
            let whole = if b.straddling {
                overlap(&range_basis(&x.select_columns(gk), opts.rank_tol))
            } else {
                bias
            };
            let m_factor = if b.straddling && !self.reparametrized {
                m_factor(x, gk, &b.remainder, opts.rank_tol)
            } else {
                1.0
            };
            let proj = b.basis.coords(&z) / sqrt_n;
            let dual_norm = match opts.penalty {
                PenaltyKind::Frobenius => proj.norm(),
                PenaltyKind::Nuclear => spectral_norm(&proj),
            };
            if opts.xi > 0.0 {
                dual_violation = dual_violation.max(dual_norm - b.xi_omega);
            }
            outside.push(OutsideGroup {
                group: b.group,
                remainder: b.remainder,
                straddling: b.straddling,
                xi_omega: b.xi_omega,
                bias,
                whole_overlap: whole,
                m_factor,
                dual_norm,
                omega_star: omega_star.get(b.group).copied().unwrap_or(f64::NAN),
                basis: b.basis,
            });
        }
        if !dual_violation.is_finite() {
            dual_violation = 0.0;
        }
        ProjectionBundle {
            target: self.target,
            target_design: self.design,
            z,
            basis,
            group_basis,
            gap,
            tau,
            rank_ok,
            outside,
            penalty_kind: opts.penalty,
            xi: opts.xi,
            reparametrized: self.reparametrized,
            dual_violation,
            z_inverse_scale,
            iterations,
            converged,
            rank_tol: opts.rank_tol,
        }
    }
}

/// `||X_{G_k} D V S^{-1}||_S` with `X_{G_k} = U S V^T` and `D` keeping the
/// coordinates outside `G`.
fn m_factor(x: &DMatrix<f64>, gk: &[usize], rest: &[usize], rank_tol: f64) -> f64 {
    let xk = x.select_columns(gk);
    let svd = checked_svd(&xk);
    let vt = &svd.v_t;
    let smax = svd.max_singular_value();
    let keep: Vec<usize> = (0..svd.s.len())
        .filter(|&i| svd.s[i] > rank_tol * smax)
        .collect();
    let mut map = DMatrix::zeros(gk.len(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = svd.s[i];
        for r in 0..gk.len() {
            if rest.contains(&gk[r]) {
                map[(r, c)] = vt[(i, r)] / s;
            }
        }
    }
    spectral_norm(&(xk * map))
}

fn prox(c: DMatrix<f64>, t: f64, kind: PenaltyKind) -> DMatrix<f64> {
    if t == 0.0 {
        return c;
    }
    match kind {
        PenaltyKind::Frobenius => {
            let norm = c.norm();
            if norm <= t {
                DMatrix::zeros(c.nrows(), c.ncols())
            } else {
                c * (1.0 - t / norm)
            }
        }
        PenaltyKind::Nuclear => {
            let (r, m) = c.shape();
            let mut svd = checked_svd(&c);
            if svd.s.iter().all(|&s| s <= t) {
                return DMatrix::zeros(r, m);
            }
            for s in svd.s.iter_mut() {
                *s = (*s - t).max(0.0);
            }
            svd.recompose()
        }
    }
}

/// Builds the score matrix for `G` and its diagnostics.
///
/// `omega2` holds one base weight per group; the penalty on group `k` is
/// `xi * omega2[k]`.
pub fn relaxed_projection(
    x: &DMatrix<f64>,
    partition: &GroupPartition,
    target: &[usize],
    omega2: &[f64],
    opts: &ProjectionOptions,
) -> Result<ProjectionBundle> {
    let setup = Setup::new(x, partition, target, omega2, opts)?;
    let (z, iterations, converged) = if opts.xi == 0.0 {
        let rest: Vec<usize> = setup
            .blocks
            .iter()
            .flat_map(|b| b.remainder.clone())
            .collect();
        let q = range_basis(&x.select_columns(&rest), opts.rank_tol);
        (q.residual_matrix(&setup.design), 0, true)
    } else {
        descend(&setup, opts)
    };
    if !converged {
        log::warn!(
            "relaxed projection stopped after {iterations} sweeps without meeting tolerance"
        );
    }
    Ok(setup.finish(x, partition, z, opts, iterations, converged))
}

fn descend(setup: &Setup, opts: &ProjectionOptions) -> (DMatrix<f64>, usize, bool) {
    let design = &setup.design;
    let n = design.nrows();
    let sqrt_n = (n as f64).sqrt();
    let m = design.ncols();
    let scale = (design.norm() / sqrt_n).max(f64::MIN_POSITIVE);
    let mut coef: Vec<DMatrix<f64>> = setup
        .blocks
        .iter()
        .map(|b| DMatrix::zeros(b.basis.rank(), m))
        .collect();
    let mut r = design.clone();
    let mut iterations = 0;
    let mut converged = setup.blocks.is_empty();
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut change: f64 = 0.0;
        for (b, bk) in setup.blocks.iter().zip(coef.iter_mut()) {
            if b.basis.rank() == 0 {
                continue;
            }
            let u = b.basis.matrix();
            let c = u.tr_mul(&r) / sqrt_n + &*bk;
            let new = prox(c, b.xi_omega, opts.penalty);
            let delta = &new - &*bk;
            let size = delta.norm();
            if size > 0.0 {
                r -= u * delta * sqrt_n;
                *bk = new;
            }
            change = change.max(size);
        }
        if iterations % 50 == 0 {
            r = design.clone();
            for (b, bk) in setup.blocks.iter().zip(&coef) {
                if b.basis.rank() > 0 {
                    r -= b.basis.matrix() * bk * sqrt_n;
                }
            }
        }
        converged = change <= opts.tol * scale;
    }
    (r, iterations, converged)
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Group with the largest `bias_k / omega'_k`.
    pub worst_group: Option<usize>,
    pub worst_ratio: f64,
    /// `max_k M_k ||P_G Q_{G_k}||_S / omega_{*,k}`, or with `Q_{G_k \ G}`
    /// and `M_k = 1` after reparametrization.
    pub eta_g: f64,
    pub gap: f64,
    pub rank_ok: bool,
}

/// Bias norms at this level are round-off: they are spectral norms of
/// products of projections, hence at most one.
const BIAS_SLACK: f64 = 1e-10;

/// Checks `||P_G Q_{G_k \ G}||_S <= omega'_k` for every outside group, together
/// with `gap < 1` and full rank of `P_G X_G`.
pub fn feasibility_report(bundle: &ProjectionBundle, omega_prime: &[f64]) -> FeasibilityReport {
    let mut worst_group = None;
    let mut worst_ratio: f64 = 0.0;
    let mut bias_ok = true;
    let mut eta_g: f64 = 0.0;
    for o in &bundle.outside {
        let bound = omega_prime.get(o.group).copied().unwrap_or(f64::INFINITY);
        let ratio = if bound > 0.0 {
            o.bias / bound
        } else if o.bias > BIAS_SLACK {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > worst_ratio || worst_group.is_none() {
            worst_ratio = ratio;
            worst_group = Some(o.group);
        }
        if o.bias > bound * (1.0 + 1e-9) + BIAS_SLACK {
            bias_ok = false;
        }
        let term = if bundle.reparametrized {
            o.bias / o.omega_star
        } else {
            o.m_factor * o.whole_overlap / o.omega_star
        };
        eta_g = eta_g.max(term);
    }
    FeasibilityReport {
        feasible: bias_ok && bundle.gap < 1.0 - 1e-12 && bundle.rank_ok,
        worst_group,
        worst_ratio,
        eta_g,
        gap: bundle.gap,
        rank_ok: bundle.rank_ok,
    }
}
