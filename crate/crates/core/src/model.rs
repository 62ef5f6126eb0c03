//! Group structure, penalty weights and the regression problem container.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partition of the variables `0..p` into disjoint, non-empty groups.
///
/// Groups need not be contiguous ranges; indices inside each group are kept
/// sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    membership: Vec<usize>,
}

impl GroupPartition {
    /// Builds a partition from explicit index sets. The sets must cover
    /// `0..p` exactly once.
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidArgument("partition has no groups".into()));
        }
        let p: usize = groups.iter().map(Vec::len).sum();
        let mut membership = vec![usize::MAX; p];
        let mut sorted = Vec::with_capacity(groups.len());
        for (j, mut g) in groups.into_iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidArgument(format!("group {j} is empty")));
            }
            g.sort_unstable();
            for &i in &g {
                if i >= p {
                    return Err(Error::InvalidArgument(format!(
                        "index {i} in group {j} is outside 0..{p}"
                    )));
                }
                if membership[i] != usize::MAX {
                    return Err(Error::InvalidArgument(format!(
                        "index {i} appears in groups {} and {j}",
                        membership[i]
                    )));
                }
                membership[i] = j;
            }
            sorted.push(g);
        }
        Ok(Self {
            groups: sorted,
            membership,
        })
    }

    /// Consecutive blocks with the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let groups = sizes
            .iter()
            .map(|&d| {
                let g: Vec<usize> = (start..start + d).collect();
                start += d;
                g
            })
            .collect();
        Self::new(groups)
    }

    /// Equal blocks of size `d` covering `p` variables.
    pub fn uniform(p: usize, d: usize) -> Result<Self> {
        if d == 0 || !p.is_multiple_of(d) {
            return Err(Error::InvalidArgument(format!(
                "group size {d} does not divide p = {p}"
            )));
        }
        Self::contiguous(&vec![d; p / d])
    }

    /// Builds a partition from one group label per variable. Distinct labels
    /// are ordered ascending and mapped to groups `0..M`.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let mut groups = vec![Vec::new(); distinct.len()];
        for (i, l) in labels.iter().enumerate() {
            let j = distinct.binary_search(l).expect("label present");
            groups[j].push(i);
        }
        Self::new(groups)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }

    /// Number of groups, `M`.
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Total number of variables, `p`.
    pub fn num_vars(&self) -> usize {
        self.membership.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Group containing variable `i`.
    pub fn group_of(&self, i: usize) -> usize {
        self.membership[i]
    }

    /// Union of the listed groups as a sorted index set.
    pub fn union_of(&self, groups: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = groups
            .iter()
            .flat_map(|&j| self.groups[j].iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// The data of a linear model `y = X beta + eps` together with the group
/// structure and base penalty weights.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub partition: GroupPartition,
    pub weights: Vec<f64>,
}

impl RegressionProblem {
    /// Builds a problem and rejects it if [`validate`] reports anything.
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        partition: GroupPartition,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let problem = Self {
            x,
            y,
            partition,
            weights,
        };
        let diags = validate(&problem);
        if let Some(first) = diags.first() {
            return Err(match first.kind {
                DiagnosticKind::ResponseLength
                | DiagnosticKind::ColumnCount
                | DiagnosticKind::WeightCount => Error::DimensionMismatch(first.message.clone()),
                _ => Error::InvalidArgument(first.message.clone()),
            });
        }
        Ok(problem)
    }

    /// Same as [`RegressionProblem::new`] but tolerates zero columns, which
    /// arise legitimately after orthonormalization of rank-deficient blocks.
    pub fn new_unchecked(
        x: DMatrix<f64>,
        y: DVector<f64>,
        partition: GroupPartition,
        weights: Vec<f64>,
    ) -> Self {
        Self {
            x,
            y,
            partition,
            weights,
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Columns of `X` listed in `idx`.
    pub fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        self.x.select_columns(idx)
    }

    /// Copy with the response replaced.
    pub fn with_response(&self, y: DVector<f64>) -> Self {
        Self { y, ..self.clone() }
    }

    /// Copy with the weights replaced.
    pub fn with_weights(&self, weights: Vec<f64>) -> Self {
        Self {
            weights,
            ..self.clone()
        }
    }
}

/// Strong group sparsity pattern of a coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityPattern {
    pub active_groups: Vec<usize>,
    /// Number of active groups.
    pub g: usize,
    /// Number of variables in the active groups.
    pub s: usize,
}

impl SparsityPattern {
    pub fn new(partition: &GroupPartition, mut active_groups: Vec<usize>) -> Result<Self> {
        active_groups.sort_unstable();
        active_groups.dedup();
        if let Some(&j) = active_groups.iter().find(|&&j| j >= partition.num_groups()) {
            return Err(Error::InvalidArgument(format!("group {j} out of range")));
        }
        let s = active_groups
            .iter()
            .map(|&j| partition.group(j).len())
            .sum();
        Ok(Self {
            g: active_groups.len(),
            s,
            active_groups,
        })
    }

    /// Smallest group pattern covering the support of `beta`.
    pub fn of(partition: &GroupPartition, beta: &DVector<f64>) -> Self {
        let active = (0..partition.num_groups())
            .filter(|&j| partition.group(j).iter().any(|&i| beta[i] != 0.0))
            .collect();
        Self::new(partition, active).expect("groups are in range")
    }

    /// True when every nonzero of `beta` lies in an active group.
    pub fn covers(&self, partition: &GroupPartition, beta: &DVector<f64>) -> bool {
        beta.iter()
            .enumerate()
            .all(|(i, &b)| b == 0.0 || self.active_groups.contains(&partition.group_of(i)))
    }
}

/// Weights `scale * (sqrt(d_j / n) + sqrt((2 / n) log M))`.
pub fn default_weights(partition: &GroupPartition, n: usize, scale: f64) -> Result<Vec<f64>> {
    default_weights_with_delta(partition, n, scale, 1.0)
}

/// Weights `scale * (sqrt(d_j / n) + sqrt((2 / n) log(M / delta)))`; `delta = 1`
/// gives [`default_weights`].
pub fn default_weights_with_delta(
    partition: &GroupPartition,
    n: usize,
    scale: f64,
    delta: f64,
) -> Result<Vec<f64>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "weight scale must be positive, got {scale}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    if n == 0 || partition.num_groups() == 0 {
        return Err(Error::InvalidArgument("empty problem".into()));
    }
    let nf = n as f64;
    let m = partition.num_groups() as f64;
    let log_term = (2.0 / nf * (m / delta).ln()).max(0.0).sqrt();
    Ok(partition
        .groups()
        .iter()
        .map(|g| scale * ((g.len() as f64 / nf).sqrt() + log_term))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    EmptyDesign,
    ResponseLength,
    ColumnCount,
    WeightCount,
    NonFinite,
    DegenerateColumn,
    NonPositiveWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

/// Checks a problem for structural defects. An empty list means the problem
/// is well formed.
pub fn validate(problem: &RegressionProblem) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |kind, message: String| out.push(Diagnostic { kind, message });
    let (n, p) = problem.x.shape();
    if n == 0 {
        push(DiagnosticKind::EmptyDesign, "design has no rows".into());
    }
    if problem.y.len() != n {
        push(
            DiagnosticKind::ResponseLength,
            format!(
                "response length mismatch: {} responses for {n} rows",
                problem.y.len()
            ),
        );
    }
    if p != problem.partition.num_vars() {
        push(
            DiagnosticKind::ColumnCount,
            format!(
                "design has {p} columns but the partition covers {} variables",
                problem.partition.num_vars()
            ),
        );
    }
    if problem.weights.len() != problem.partition.num_groups() {
        push(
            DiagnosticKind::WeightCount,
            format!(
                "{} weights for {} groups",
                problem.weights.len(),
                problem.partition.num_groups()
            ),
        );
    }
    if problem.x.iter().any(|v| !v.is_finite()) {
        push(
            DiagnosticKind::NonFinite,
            "design has NaN/Inf entries".into(),
        );
    }
    if problem.y.iter().any(|v| !v.is_finite()) {
        push(
            DiagnosticKind::NonFinite,
            "response has NaN/Inf entries".into(),
        );
    }
    for (c, col) in problem.x.column_iter().enumerate() {
        if col.iter().all(|&v| v == 0.0) {
            push(
                DiagnosticKind::DegenerateColumn,
                format!("degenerate column {c}: all entries are zero"),
            );
        }
    }
    for (j, &w) in problem.weights.iter().enumerate() {
        if !(w > 0.0) || !w.is_finite() {
            push(
                DiagnosticKind::NonPositiveWeight,
                format!("weight of group {j} is not positive: {w}"),
            );
        }
    }
    out
}
