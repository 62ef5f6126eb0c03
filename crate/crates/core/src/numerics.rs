//! Dense SVD-backed kernels: range bases, orthogonal projections,
//! pseudo-inverses and spectral norms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative cutoff below which singular directions are treated as null.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// An orthonormal basis `U` (n x r) of a column space.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    u: DMatrix<f64>,
    source_dim: usize,
}

impl OrthoBasis {
    /// Basis of the trivial subspace of `R^n`.
    pub fn empty(n: usize) -> Self {
        Self {
            u: DMatrix::zeros(n, 0),
            source_dim: 0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    /// `U U^T v`.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} projected in R^{}",
                v.len(),
                self.dim()
            )));
        }
        if self.rank() == 0 {
            return Ok(DVector::zeros(v.len()));
        }
        Ok(&self.u * (self.u.tr_mul(v)))
    }

    /// `v - U U^T v`.
    pub fn residual(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(v - self.project(v)?)
    }

    /// `U U^T A` applied column by column.
    pub fn project_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(a.nrows(), self.dim(), "row count must match ambient dim");
        if self.rank() == 0 {
            return DMatrix::zeros(a.nrows(), a.ncols());
        }
        &self.u * self.u.tr_mul(a)
    }

    /// `A - U U^T A`.
    pub fn residual_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        a - self.project_matrix(a)
    }

    /// Coordinates `U^T A`.
    pub fn coords(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.u.tr_mul(a)
    }
}

/// Thin singular value decomposition `A = U diag(s) V^T`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    pub fn recompose(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.s) * &self.v_t
    }

    fn error(&self, a: &DMatrix<f64>) -> f64 {
        (self.recompose() - a).norm()
    }

    fn transposed(self) -> Self {
        Self {
            u: self.v_t.transpose(),
            s: self.s,
            v_t: self.u.transpose(),
        }
    }

    pub fn max_singular_value(&self) -> f64 {
        self.s.iter().cloned().fold(0.0, f64::max)
    }
}

fn raw_svd(a: &DMatrix<f64>) -> Svd {
    let svd = a.clone().svd(true, true);
    Svd {
        u: svd.u.expect("left vectors requested"),
        s: svd.singular_values,
        v_t: svd.v_t.expect("right vectors requested"),
    }
}

/// SVD whose factorization is verified against `A`.
///
/// nalgebra's bidiagonal SVD occasionally returns a wrong factorization
/// for exactly rank-deficient square inputs (seen with 0.35). When the
/// reconstruction check fails, the decomposition is retried on `A^T` and
/// then on the triangular factor of a QR decomposition; the most accurate
/// result is returned.
pub fn checked_svd(a: &DMatrix<f64>) -> Svd {
    let (n, m) = a.shape();
    if n == 0 || m == 0 {
        return Svd {
            u: DMatrix::zeros(n, 0),
            s: DVector::zeros(0),
            v_t: DMatrix::zeros(0, m),
        };
    }
    let tol = 64.0 * f64::EPSILON * (n + m) as f64 * a.norm();
    let first = raw_svd(a);
    let mut best_err = first.error(a);
    if best_err <= tol {
        return first;
    }
    let mut best = first;
    let mut consider = |cand: Svd| -> bool {
        let err = cand.error(a);
        if err < best_err {
            best_err = err;
            best = cand;
        }
        best_err <= tol
    };
    let done = consider(raw_svd(&a.transpose()).transposed());
    if !done {
        let qr_route = if n >= m {
            let qr = a.clone().qr();
            let inner = raw_svd(&qr.r());
            Svd {
                u: qr.q() * inner.u,
                s: inner.s,
                v_t: inner.v_t,
            }
        } else {
            let qr = a.transpose().qr();
            let inner = raw_svd(&qr.r());
            Svd {
                u: qr.q() * inner.u,
                s: inner.s,
                v_t: inner.v_t,
            }
            .transposed()
        };
        if !consider(qr_route) {
            log::warn!("SVD reconstruction error {best_err:e} exceeds {tol:e} on a {n}x{m} matrix");
        }
    }
    best
}

/// Singular values of `A` from [`checked_svd`].
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    checked_svd(a).s
}

/// Orthonormal basis of `range(A)`. Singular directions with singular value
/// at most `rank_tol` times the largest one are dropped.
pub fn range_basis(a: &DMatrix<f64>, rank_tol: f64) -> OrthoBasis {
    range_basis_with_floor(a, rank_tol, 0.0)
}

/// Like [`range_basis`], but the cutoff is `rank_tol * max(sigma_max(A), reference)`.
///
/// A positive `reference` lets callers judge a matrix that is small in
/// absolute terms (for example a residual that should vanish) against the
/// scale of the data it came from.
pub fn range_basis_with_floor(a: &DMatrix<f64>, rank_tol: f64, reference: f64) -> OrthoBasis {
    let (n, m) = a.shape();
    if n == 0 || m == 0 {
        return OrthoBasis {
            u: DMatrix::zeros(n, 0),
            source_dim: m,
        };
    }
    let svd = checked_svd(a);
    let u = svd.u;
    let smax = svd.s.iter().cloned().fold(0.0, f64::max);
    let cutoff = rank_tol * smax.max(reference);
    let keep: Vec<usize> = svd
        .s
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > cutoff && s > 0.0)
        .map(|(i, _)| i)
        .collect();
    OrthoBasis {
        u: u.select_columns(&keep),
        source_dim: m,
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    // The Gram matrix is smaller on the short side; its eigenvalues would
    // square the condition number, so take the SVD of the matrix itself.
    singular_values(a).iter().cloned().fold(0.0, f64::max)
}

/// Smallest singular value among the first `min(rows, cols)`.
pub fn min_singular_value(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    singular_values(a)
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// `A^+ b` through a truncated SVD.
pub fn pinv_apply(a: &DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, vector has length {}",
            a.nrows(),
            b.len()
        )));
    }
    let m = a.ncols();
    if a.nrows() == 0 || m == 0 {
        return Ok(DVector::zeros(m));
    }
    let svd = checked_svd(a);
    let (u, vt) = (&svd.u, &svd.v_t);
    let smax = svd.max_singular_value();
    let cutoff = rank_tol * smax;
    let mut x = DVector::zeros(m);
    for (i, &s) in svd.s.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let coef = u.column(i).dot(b) / s;
            x += vt.row(i).transpose() * coef;
        }
    }
    Ok(x)
}

/// Moore-Penrose pseudo-inverse with truncation.
pub fn pinv(a: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    let (n, m) = a.shape();
    if n == 0 || m == 0 {
        return DMatrix::zeros(m, n);
    }
    let svd = checked_svd(a);
    let (u, vt) = (&svd.u, &svd.v_t);
    let smax = svd.max_singular_value();
    let mut out = DMatrix::zeros(m, n);
    for (i, &s) in svd.s.iter().enumerate() {
        if s > rank_tol * smax && s > 0.0 {
            out += vt.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

/// Largest residual `max(||(I - P_a) b_i||, ||(I - P_b) a_i||)` between two
/// bases: zero exactly when they span the same subspace.
pub fn subspace_distance(a: &OrthoBasis, b: &OrthoBasis) -> f64 {
    if a.rank() != b.rank() {
        return 1.0;
    }
    let ra = b.residual_matrix(a.matrix());
    let rb = a.residual_matrix(b.matrix());
    spectral_norm(&ra).max(spectral_norm(&rb))
}
