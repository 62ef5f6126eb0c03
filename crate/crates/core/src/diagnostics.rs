//! Sampled upper bounds for cone-restricted design constants.
//!
//! Each constant is an infimum of a ratio over a cone of directions. Any
//! direction in the cone gives an upper bound, so the estimators sample
//! directions, keep the smallest ratio, and polish it with a coordinate
//! pattern search that never leaves the cone. Reported values are upper
//! bounds only.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GroupPartition;

/// Absolute cone-depth multipliers tried for every raw sample, on top of `xi`.
const DEPTH_GRID: [f64; 10] = [0.0, 0.125, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantKind {
    /// Restricted eigenvalue.
    Re,
    /// Compatibility constant.
    Cc,
    /// Cone invertibility factor with `q` in `{1, 2}`.
    Cif(u8),
    /// Sign-restricted cone invertibility factor with `q` in `{1, 2}`.
    Scif(u8),
}

impl std::fmt::Display for ConstantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Re => write!(f, "RE"),
            Self::Cc => write!(f, "CC"),
            Self::Cif(q) => write!(f, "CIF{q}"),
            Self::Scif(q) => write!(f, "SCIF{q}"),
        }
    }
}

/// Design, weights and support sets defining the cones.
#[derive(Debug, Clone)]
pub struct ConeContext<'a> {
    x: &'a DMatrix<f64>,
    partition: &'a GroupPartition,
    weights: &'a [f64],
    support: Vec<usize>,
    t_prime: Vec<usize>,
    in_support: Vec<bool>,
    /// `(sum_{j in T} w_j^2)`.
    support_w2: f64,
}

impl<'a> ConeContext<'a> {
    /// `support` is the group set `T`; `t_prime` (a superset of `T`) defaults
    /// to `T`. Group ids are 0-based.
    pub fn new(
        x: &'a DMatrix<f64>,
        partition: &'a GroupPartition,
        weights: &'a [f64],
        support: &[usize],
        t_prime: Option<&[usize]>,
    ) -> Result<Self> {
        let m = partition.num_groups();
        if x.ncols() != partition.num_vars() || weights.len() != m {
            return Err(Error::DimensionMismatch(
                "design, partition and weights disagree".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        if support.is_empty() {
            return Err(Error::InvalidArgument("support set T is empty".into()));
        }
        let mut in_support = vec![false; m];
        for &j in support {
            if j >= m {
                return Err(Error::InvalidArgument(format!("group {j} out of range")));
            }
            in_support[j] = true;
        }
        let mut t_prime = t_prime
            .map(|t| t.to_vec())
            .unwrap_or_else(|| support.to_vec());
        t_prime.sort_unstable();
        t_prime.dedup();
        if t_prime.iter().any(|&j| j >= m) || support.iter().any(|j| !t_prime.contains(j)) {
            return Err(Error::InvalidArgument("T' must contain T".into()));
        }
        let mut support = support.to_vec();
        support.sort_unstable();
        support.dedup();
        let support_w2 = support.iter().map(|&j| weights[j] * weights[j]).sum();
        Ok(Self {
            x,
            partition,
            weights,
            support,
            t_prime,
            in_support,
            support_w2,
        })
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    fn group_norms(&self, u: &DVector<f64>) -> Vec<f64> {
        self.partition
            .groups()
            .iter()
            .map(|g| g.iter().map(|&i| u[i] * u[i]).sum::<f64>().sqrt())
            .collect()
    }

    /// `(sum_{T^c} w_j ||u_j||, sum_T w_j ||u_j||)`.
    fn cone_sums(&self, norms: &[f64]) -> (f64, f64) {
        let mut inside = 0.0;
        let mut outside = 0.0;
        for (j, (&w, &nj)) in self.weights.iter().zip(norms).enumerate() {
            if self.in_support[j] {
                inside += w * nj;
            } else {
                outside += w * nj;
            }
        }
        (outside, inside)
    }

    /// Evaluates every defining ratio at `u` and reports cone membership
    /// for relaxation `xi`.
    pub fn evaluate(&self, u: &DVector<f64>, xi: f64) -> ConeSample {
        let n = self.x.nrows() as f64;
        let norms = self.group_norms(u);
        let (outside, inside) = self.cone_sums(&norms);
        let in_cone = inside > 0.0 && outside <= xi * inside * (1.0 + 1e-12);
        let xu = self.x * u;
        let fit = xu.norm();
        let grad = self.x.tr_mul(&xu);
        let mut max_score: f64 = 0.0;
        let mut sign_ok = true;
        for (j, g) in self.partition.groups().iter().enumerate() {
            let gj: f64 = g.iter().map(|&i| grad[i] * grad[i]).sum::<f64>().sqrt();
            max_score = max_score.max(gj / self.weights[j]);
            if !self.in_support[j] {
                let inner: f64 = g.iter().map(|&i| u[i] * grad[i]).sum();
                if inner > 1e-12 * fit * fit {
                    sign_ok = false;
                }
            }
        }
        let u_tp: f64 = self
            .t_prime
            .iter()
            .map(|&j| norms[j] * norms[j])
            .sum::<f64>()
            .sqrt();
        let lq = |q: f64| -> f64 {
            self.t_prime
                .iter()
                .map(|&j| {
                    let w = self.weights[j];
                    w * w * (norms[j] / w).powf(q)
                })
                .sum::<f64>()
                .powf(1.0 / q)
        };
        let re = fit / (n.sqrt() * u_tp);
        let cc = fit * self.support_w2.sqrt() / (n.sqrt() * inside);
        let cif = |q: f64| max_score * self.support_w2.powf(1.0 / q) / (n * lq(q));
        ConeSample {
            u: u.clone(),
            in_cone,
            in_sign_cone: in_cone && sign_ok,
            re,
            cc,
            cif1: cif(1.0),
            cif2: cif(2.0),
        }
    }
}

/// A direction with its cone membership and every defining ratio.
#[derive(Debug, Clone, Serialize)]
pub struct ConeSample {
    #[serde(skip)]
    pub u: DVector<f64>,
    pub in_cone: bool,
    pub in_sign_cone: bool,
    pub re: f64,
    pub cc: f64,
    /// The CIF/SCIF ratio for `q = 1`; it bounds SCIF only on the sign cone.
    pub cif1: f64,
    pub cif2: f64,
}

impl ConeSample {
    /// The ratio defining `kind`, or `+inf` when `u` is outside its cone.
    pub fn value(&self, kind: ConstantKind) -> f64 {
        if !self.in_cone {
            return f64::INFINITY;
        }
        let v = match kind {
            ConstantKind::Re => self.re,
            ConstantKind::Cc => self.cc,
            ConstantKind::Cif(1) => self.cif1,
            ConstantKind::Cif(_) => self.cif2,
            ConstantKind::Scif(q) if self.in_sign_cone => {
                if q == 1 {
                    self.cif1
                } else {
                    self.cif2
                }
            }
            ConstantKind::Scif(_) => f64::INFINITY,
        };
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub kind: ConstantKind,
    pub xi: f64,
    /// Smallest ratio found; an upper bound on the infimum. `+inf` when no
    /// sampled direction was admissible.
    pub upper_bound: f64,
    pub argmin_u: Vec<f64>,
    pub admissible_samples: usize,
}

fn check_kind(kind: ConstantKind) -> Result<()> {
    match kind {
        ConstantKind::Cif(q) | ConstantKind::Scif(q) if q != 1 && q != 2 => Err(
            Error::InvalidArgument(format!("only q = 1 and q = 2 are supported, got {q}")),
        ),
        _ => Ok(()),
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cone parameter xi must be finite and non-negative, got {xi}"
        )));
    }
    Ok(())
}

fn sphere(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// One raw draw: a part `a` on the groups of `T`, a part `b` on a few other
/// groups, and the ratio `sum_T w ||a_j|| / sum_{T^c} w ||b_j||`.
struct RawSample {
    a: DVector<f64>,
    b: DVector<f64>,
    depth_unit: f64,
}

fn raw_sample(ctx: &ConeContext, seed: u64, index: usize) -> RawSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let p = ctx.p();
    let mut a = DVector::zeros(p);
    let mut b = DVector::zeros(p);
    // Occasionally concentrate all of T's mass on one group.
    let single = if ctx.support.len() > 1 && rng.random_bool(0.3) {
        Some(ctx.support[rng.random_range(0..ctx.support.len())])
    } else {
        None
    };
    for &j in &ctx.support {
        if single.is_some_and(|s| s != j) {
            continue;
        }
        let g = ctx.partition.group(j);
        let mag: f64 = Exp1.sample(&mut rng);
        for (v, &i) in sphere(&mut rng, g.len()).into_iter().zip(g) {
            a[i] = v * mag;
        }
    }
    let others: Vec<usize> = (0..ctx.partition.num_groups())
        .filter(|&j| !ctx.in_support[j])
        .collect();
    let mut extra = 0;
    while extra < others.len() && rng.random_bool(0.5) {
        extra += 1;
    }
    if extra == 0 && !others.is_empty() {
        extra = 1;
    }
    let mut pool = others;
    for _ in 0..extra {
        let j = pool.swap_remove(rng.random_range(0..pool.len()));
        let g = ctx.partition.group(j);
        let mag: f64 = Exp1.sample(&mut rng);
        for (v, &i) in sphere(&mut rng, g.len()).into_iter().zip(g) {
            b[i] = v * mag;
        }
    }
    let na = ctx.cone_sums(&ctx.group_norms(&a)).1;
    let nb = ctx.cone_sums(&ctx.group_norms(&b)).0;
    let depth_unit = if nb > 0.0 { na / nb } else { 0.0 };
    RawSample { a, b, depth_unit }
}

fn raw_directions(raw: &RawSample, xi: f64) -> impl Iterator<Item = DVector<f64>> + '_ {
    DEPTH_GRID
        .iter()
        .copied()
        .filter(move |&c| c <= xi)
        .chain(std::iter::once(xi))
        .map(move |c| {
            let u = &raw.a + &raw.b * (c * raw.depth_unit);
            let norm = u.norm();
            u / norm
        })
}

/// Evaluates every ratio at `budget` raw draws expanded over the depth grid.
///
/// Draw `i` uses its own RNG stream, so the result does not depend on the
/// thread count.
pub fn sample_cone(
    ctx: &ConeContext,
    xi: f64,
    budget: usize,
    seed: u64,
) -> Result<Vec<ConeSample>> {
    check_xi(xi)?;
    if budget == 0 {
        return Err(Error::InvalidArgument(
            "sampling budget must be at least 1".into(),
        ));
    }
    Ok((0..budget)
        .into_par_iter()
        .flat_map_iter(|i| {
            let raw = raw_sample(ctx, seed, i);
            raw_directions(&raw, xi)
                .map(|u| ctx.evaluate(&u, xi))
                .collect::<Vec<_>>()
        })
        .collect())
}

/// Refinement restarts from this many of the best sampled directions.
const REFINE_STARTS: usize = 8;

/// The `k` admissible samples with the smallest ratio, best first.
fn best_starts<'s>(
    samples: impl Iterator<Item = &'s ConeSample>,
    kind: ConstantKind,
    k: usize,
) -> Vec<ConeSample> {
    let mut scored: Vec<(f64, &ConeSample)> = samples
        .map(|s| (s.value(kind), s))
        .filter(|(v, _)| v.is_finite())
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.into_iter().take(k).map(|(_, s)| s.clone()).collect()
}

/// Pattern search on the ratio, restricted to admissible points. Each sweep
/// tries the coordinate axes and as many random directions; the latter get
/// past the kinks of the max-type ratios and along curved cone boundaries.
fn refine(
    ctx: &ConeContext,
    kind: ConstantKind,
    xi: f64,
    start: ConeSample,
    max_evals: usize,
    seed: u64,
) -> ConeSample {
    let p = ctx.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = start;
    let mut val = cur.value(kind);
    let mut step = 0.25;
    let mut evals = 0;
    while step > 1e-9 && evals < max_evals {
        let mut improved = false;
        let mut dirs: Vec<DVector<f64>> = (0..p)
            .map(|i| {
                let mut e = DVector::zeros(p);
                e[i] = 1.0;
                e
            })
            .collect();
        dirs.extend((0..3 * p).map(|_| DVector::from_vec(sphere(&mut rng, p))));
        for d in &dirs {
            for sign in [1.0, -1.0] {
                let mut u = &cur.u + d * (sign * step);
                let norm = u.norm();
                if norm == 0.0 {
                    continue;
                }
                u /= norm;
                let cand = ctx.evaluate(&u, xi);
                evals += 1;
                let v = cand.value(kind);
                if v < val {
                    val = v;
                    cur = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    cur
}

fn finish(
    kind: ConstantKind,
    xi: f64,
    best: Option<(f64, ConeSample)>,
    admissible: usize,
) -> ConstantEstimate {
    match best {
        Some((v, s)) => ConstantEstimate {
            kind,
            xi,
            upper_bound: v,
            argmin_u: s.u.iter().copied().collect(),
            admissible_samples: admissible,
        },
        None => {
            log::warn!("no admissible direction for {kind} at xi = {xi}; reporting +inf");
            ConstantEstimate {
                kind,
                xi,
                upper_bound: f64::INFINITY,
                argmin_u: Vec::new(),
                admissible_samples: 0,
            }
        }
    }
}

/// Refinement evaluations allowed per estimate.
fn refine_budget(p: usize, budget: usize) -> usize {
    (budget * 4).max(400 * p)
}

/// Upper bound on one constant from `budget` sampled directions plus
/// refinement of the best one.
pub fn estimate_constant(
    ctx: &ConeContext,
    kind: ConstantKind,
    xi: f64,
    budget: usize,
    seed: u64,
) -> Result<ConstantEstimate> {
    Ok(estimate_path(ctx, kind, &[xi], budget, seed)?.remove(0))
}

/// Estimates one constant along increasing values of `xi`, sharing the raw
/// draws. The cones are nested, so each step starts from the previous
/// minimizer and the estimates are non-increasing in `xi`.
pub fn estimate_path(
    ctx: &ConeContext,
    kind: ConstantKind,
    xis: &[f64],
    budget: usize,
    seed: u64,
) -> Result<Vec<ConstantEstimate>> {
    check_kind(kind)?;
    if budget == 0 {
        return Err(Error::InvalidArgument(
            "sampling budget must be at least 1".into(),
        ));
    }
    for &xi in xis {
        check_xi(xi)?;
    }
    let mut order: Vec<usize> = (0..xis.len()).collect();
    order.sort_by(|&a, &b| xis[a].total_cmp(&xis[b]));
    let mut out: Vec<Option<ConstantEstimate>> = vec![None; xis.len()];
    let mut carried: Option<ConeSample> = None;
    for &idx in &order {
        let xi = xis[idx];
        let samples = sample_cone(ctx, xi, budget, seed)?;
        let admissible = samples.iter().filter(|s| s.value(kind).is_finite()).count();
        let mut starts = best_starts(samples.iter(), kind, REFINE_STARTS);
        if let Some(prev) = &carried {
            let again = ctx.evaluate(&prev.u, xi);
            if again.value(kind).is_finite() {
                starts.push(again);
            }
        }
        let per_start = refine_budget(ctx.p(), budget) / 2;
        let mut best: Option<(f64, ConeSample)> = None;
        for (k, s) in starts.into_iter().enumerate() {
            let refined = refine(ctx, kind, xi, s, per_start, seed ^ (k as u64 + 1));
            let v = refined.value(kind);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, refined));
            }
        }
        carried = best.as_ref().map(|(_, s)| s.clone());
        out[idx] = Some(finish(kind, xi, best, admissible));
    }
    Ok(out
        .into_iter()
        .map(|e| e.expect("every xi visited"))
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub xi: f64,
    pub re: ConstantEstimate,
    pub cc: ConstantEstimate,
    pub scif1: ConstantEstimate,
    /// `RE^2 <= CC^2 <= SCIF_1` holds for the reported bounds.
    pub ordering_holds: bool,
    /// Sampled directions at which the pointwise ordering failed.
    pub ordering_violations: usize,
}

/// Estimates RE, CC and SCIF_1 from one shared sample set, then evaluates
/// every refined minimizer under all three ratios.
pub fn estimate_all(
    ctx: &ConeContext,
    xi: f64,
    budget: usize,
    seed: u64,
) -> Result<ConstantsReport> {
    Ok(estimate_all_path(ctx, &[xi], budget, seed)?.remove(0))
}

/// [`estimate_all`] along a grid of `xi`, returned in ascending order.
///
/// At each `xi` the minimizers of all three ratios, and those carried from
/// the previous (smaller) cone, are scored under every ratio. The reported
/// bounds therefore respect the pointwise ordering and are non-increasing.
pub fn estimate_all_path(
    ctx: &ConeContext,
    xis: &[f64],
    budget: usize,
    seed: u64,
) -> Result<Vec<ConstantsReport>> {
    let kinds = [ConstantKind::Re, ConstantKind::Cc, ConstantKind::Scif(1)];
    let mut xs = xis.to_vec();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let paths: Vec<Vec<ConstantEstimate>> = kinds
        .iter()
        .map(|&k| estimate_path(ctx, k, &xs, budget, seed))
        .collect::<Result<_>>()?;
    let mut carried: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::with_capacity(xs.len());
    for (i, &xi) in xs.iter().enumerate() {
        let mut est: Vec<ConstantEstimate> = paths.iter().map(|p| p[i].clone()).collect();
        let mut candidates: Vec<DVector<f64>> = est
            .iter()
            .filter(|e| !e.argmin_u.is_empty())
            .map(|e| DVector::from_vec(e.argmin_u.clone()))
            .collect();
        candidates.append(&mut carried);
        let argmins: Vec<ConeSample> = candidates.iter().map(|u| ctx.evaluate(u, xi)).collect();
        for (e, &k) in est.iter_mut().zip(&kinds) {
            for s in &argmins {
                let v = s.value(k);
                if v < e.upper_bound {
                    e.upper_bound = v;
                    e.argmin_u = s.u.iter().copied().collect();
                }
            }
        }
        carried = est
            .iter()
            .filter(|e| !e.argmin_u.is_empty())
            .map(|e| DVector::from_vec(e.argmin_u.clone()))
            .collect();
        let samples = sample_cone(ctx, xi, budget, seed)?;
        let ordering_violations = samples
            .iter()
            .chain(&argmins)
            .filter(|s| !pointwise_ordering(s))
            .count();
        let scif1 = est.pop().expect("three estimates");
        let cc = est.pop().expect("three estimates");
        let re = est.pop().expect("three estimates");
        let tol = 1e-10;
        let ordering_holds = re.upper_bound.powi(2) <= cc.upper_bound.powi(2) * (1.0 + tol)
            && cc.upper_bound.powi(2) <= scif1.upper_bound * (1.0 + tol);
        out.push(ConstantsReport {
            xi,
            re,
            cc,
            scif1,
            ordering_holds,
            ordering_violations,
        });
    }
    Ok(out)
}

/// `RE(u)^2 <= CC(u)^2` on the cone and `CC(u)^2 <= SCIF_1(u)` on the sign cone,
/// with `T' = T`.
pub fn pointwise_ordering(s: &ConeSample) -> bool {
    let tol = 1e-10;
    if !s.in_cone {
        return true;
    }
    let first = s.re * s.re <= s.cc * s.cc * (1.0 + tol);
    let second = !s.in_sign_cone || s.cc * s.cc <= s.cif1 * (1.0 + tol);
    first && second
}
