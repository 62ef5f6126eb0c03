//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library's numerical routines.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Random group sizes summing to `p` with `m` nonempty groups.
pub fn random_sizes(rng: &mut ChaCha8Rng, p: usize, m: usize) -> Vec<usize> {
    let mut sizes = vec![1; m];
    for _ in m..p {
        let j = rng.random_range(0..m);
        sizes[j] += 1;
    }
    sizes
}

/// `(eigenvalues, eigenvectors)` of the smaller Gram matrix of `a`, plus
/// whether it was `A^T A` (true) or `A A^T`.
fn gram_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>, bool) {
    let right = a.ncols() <= a.nrows();
    let gram = if right {
        a.transpose() * a
    } else {
        a * a.transpose()
    };
    let e = gram.symmetric_eigen();
    (e.eigenvalues, e.eigenvectors, right)
}

/// Moore-Penrose inverse from the eigendecomposition of `A^T A` (or
/// `A A^T`). Gram eigenvalues carry round-off of order `eps * top`, so the
/// cutoff is `1e-12 * top`, i.e. `1e-6` relative on the singular values.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let (vals, vecs, right) = gram_eigen(a);
    let top = vals.max().max(f64::MIN_POSITIVE);
    let mut inv = DMatrix::zeros(vecs.nrows(), vecs.nrows());
    for (k, &l) in vals.iter().enumerate() {
        if l > 1e-12 * top {
            inv += vecs.column(k) * vecs.column(k).transpose() / l;
        }
    }
    // A^+ = (A^T A)^+ A^T = A^T (A A^T)^+
    if right {
        inv * a.transpose()
    } else {
        a.transpose() * inv
    }
}

/// Orthogonal projection onto the column space of `a`.
pub fn projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), a.nrows());
    }
    a * pinv(a)
}

pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    gram_eigen(a).0.iter().map(|l| l.max(0.0).sqrt()).collect()
}

pub fn spectral(a: &DMatrix<f64>) -> f64 {
    singular_values(a).into_iter().fold(0.0, f64::max)
}

pub fn nuclear(a: &DMatrix<f64>) -> f64 {
    singular_values(a).into_iter().sum()
}

pub fn sub(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub fn cols(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    x.select_columns(idx)
}

/// Accelerated proximal gradient for
/// `||y - X b||^2 / (2n) + sum_j lambda_j ||b_{G_j}||`, run to a fixed point.
pub fn prox_gradient(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    groups: &[Vec<usize>],
    lambda: &[f64],
) -> DVector<f64> {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let lip = spectral(x).powi(2) / n;
    let step = 1.0 / lip;
    let prox = |v: &DVector<f64>| {
        let mut out = v.clone();
        for (g, &l) in groups.iter().zip(lambda) {
            let norm = g.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
            let shrink = if norm > step * l {
                1.0 - step * l / norm
            } else {
                0.0
            };
            for &i in g {
                out[i] = v[i] * shrink;
            }
        }
        out
    };
    let mut b = DVector::zeros(p);
    let mut z = b.clone();
    let mut t: f64 = 1.0;
    for _ in 0..2_000_000 {
        let grad = x.tr_mul(&(x * &z - y)) / n;
        let next = prox(&(&z - grad * step));
        let moved = (&next - &b).amax();
        if (&z - &next).dot(&(&next - &b)) > 0.0 {
            // Momentum points uphill: restart.
            t = 1.0;
            z = next.clone();
        } else {
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            z = &next + (&next - &b) * ((t - 1.0) / t_next);
            t = t_next;
        }
        b = next;
        if moved <= 1e-15 * (1.0 + b.amax()) {
            break;
        }
    }
    b
}
