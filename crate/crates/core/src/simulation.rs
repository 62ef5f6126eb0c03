//! Seeded data generators and the replication harness.
//!
//! Every replication draws from its own ChaCha streams keyed by
//! `(seed, replication, stream)`, so results do not depend on scheduling or
//! on the number of threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::inference::{group_test, SigmaPlugin, TestOptions};
use crate::model::{default_weights, GroupPartition, RegressionProblem};
use crate::projection::{relaxed_projection, ProjectionOptions};
use crate::scaled::{fit_scaled, ScaledOptions};

const STREAM_DESIGN: u64 = 0;
const STREAM_SIGNAL: u64 = 1;
const STREAM_NOISE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Correlation {
    Identity,
    /// Block-diagonal equicorrelation with blocks of `size` consecutive columns.
    Block {
        size: usize,
        rho: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SignalValues {
    /// Random signs.
    PlusMinusOne,
    Uniform {
        low: f64,
        high: f64,
    },
    Constant {
        value: f64,
    },
}

/// A simulation design: `y = X beta* + eps` with Gaussian rows and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    /// Every group has this many consecutive columns.
    pub group_size: usize,
    pub correlation: Correlation,
    /// Number of groups carrying signal (the first `g` groups).
    pub active_groups: usize,
    /// Number of nonzero coefficients, filled group by group.
    pub sparsity: usize,
    pub signal: SignalValues,
    pub sigma: f64,
    pub orthonormalize_groups: bool,
    pub seed: u64,
}

impl SimDesign {
    /// Independent `N(0, 1)` design, `n = 1000`, groups of 4, two active
    /// groups with `+-1` signals, groupwise orthonormalized.
    pub fn sigma_study(p: usize) -> Self {
        Self {
            n: 1000,
            p,
            group_size: 4,
            correlation: Correlation::Identity,
            active_groups: 2,
            sparsity: 8,
            signal: SignalValues::PlusMinusOne,
            sigma: 1.0,
            orthonormalize_groups: true,
            seed: 2016,
        }
    }

    /// Ten active groups of 4 with signals in `[2, 3]`, `n = 1000`, `p = 200`.
    pub fn small_group_study() -> Self {
        Self {
            active_groups: 10,
            sparsity: 40,
            signal: SignalValues::Uniform {
                low: 2.0,
                high: 3.0,
            },
            ..Self::sigma_study(200)
        }
    }

    /// Two active groups of 20 with signals in `[2, 3]`, `n = 1000`, `p = 200`.
    pub fn large_group_study() -> Self {
        Self {
            group_size: 20,
            active_groups: 2,
            sparsity: 40,
            signal: SignalValues::Uniform {
                low: 2.0,
                high: 3.0,
            },
            ..Self::sigma_study(200)
        }
    }

    /// `n = 100`, `p = 200`, equicorrelated blocks equal to the groups, only
    /// the first group nonzero with every coefficient equal to `tau`.
    pub fn comparison_study(block: usize, rho: f64, tau: f64) -> Self {
        Self {
            n: 100,
            p: 200,
            group_size: block,
            correlation: Correlation::Block { size: block, rho },
            active_groups: 1,
            sparsity: block,
            signal: SignalValues::Constant { value: tau },
            sigma: 1.0,
            orthonormalize_groups: false,
            seed: 2016,
        }
    }

    /// The comparison design with no signal at all.
    pub fn global_null() -> Self {
        Self {
            active_groups: 0,
            sparsity: 0,
            signal: SignalValues::Constant { value: 0.0 },
            ..Self::comparison_study(5, 0.0, 0.0)
        }
    }

    pub fn num_groups(&self) -> usize {
        self.p / self.group_size.max(1)
    }

    pub fn partition(&self) -> Result<GroupPartition> {
        GroupPartition::uniform(self.p, self.group_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 || self.p == 0 || self.group_size == 0 {
            return bad("n, p and group_size must be positive".into());
        }
        if !self.p.is_multiple_of(self.group_size) {
            return bad(format!(
                "p = {} is not a multiple of group_size = {}",
                self.p, self.group_size
            ));
        }
        if let Correlation::Block { size, rho } = self.correlation {
            if size == 0 || !self.p.is_multiple_of(size) {
                return bad(format!("block size {size} must divide p = {}", self.p));
            }
            let lower = if size > 1 {
                -1.0 / (size as f64 - 1.0)
            } else {
                -1.0
            };
            if !(rho > lower && rho < 1.0) {
                return bad(format!(
                    "within-block correlation {rho} must lie in ({lower}, 1) for blocks of {size}"
                ));
            }
        }
        if self.active_groups > self.num_groups() {
            return bad("more active groups than groups".into());
        }
        let capacity = self.active_groups * self.group_size;
        if self.sparsity > capacity
            || (self.active_groups > 0 && self.sparsity <= capacity - self.group_size)
        {
            return bad(format!(
                "sparsity {} does not fit {} active groups of size {}",
                self.sparsity, self.active_groups, self.group_size
            ));
        }
        if !(self.sigma > 0.0) {
            return bad("noise level must be positive".into());
        }
        if self.orthonormalize_groups && self.group_size > self.n {
            return bad("groups larger than n cannot be orthonormalized".into());
        }
        if let SignalValues::Uniform { low, high } = self.signal {
            if !(low <= high) {
                return bad("uniform signal needs low <= high".into());
            }
        }
        Ok(())
    }
}

/// RNG for one `(seed, replication, stream)` triple.
pub fn stream_rng(seed: u64, rep: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&rep.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// One simulated data set with its ground truth.
#[derive(Debug, Clone)]
pub struct SimData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub partition: GroupPartition,
    pub beta_star: DVector<f64>,
    pub eps: DVector<f64>,
    pub sigma: f64,
}

impl SimData {
    /// The regression problem with default weights at `weight_scale`.
    pub fn problem(&self, weight_scale: f64) -> Result<RegressionProblem> {
        let w = default_weights(&self.partition, self.x.nrows(), weight_scale)?;
        RegressionProblem::new(self.x.clone(), self.y.clone(), self.partition.clone(), w)
    }
}

fn equicorrelation_factor(size: usize, rho: f64) -> Result<DMatrix<f64>> {
    let sigma = DMatrix::from_fn(size, size, |i, j| if i == j { 1.0 } else { rho });
    sigma.cholesky().map(|c| c.l()).ok_or_else(|| {
        Error::InvalidArgument(format!("correlation {rho} is not positive definite"))
    })
}

/// Draws replication `rep` of `design`.
pub fn generate(design: &SimDesign, rep: u64) -> Result<SimData> {
    design.validate()?;
    let (n, p) = (design.n, design.p);
    let partition = design.partition()?;

    let mut rng = stream_rng(design.seed, rep, STREAM_DESIGN);
    let mut x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    if let Correlation::Block { size, rho } = design.correlation {
        if rho != 0.0 {
            let l = equicorrelation_factor(size, rho)?;
            for b in 0..p / size {
                let block = x.columns(b * size, size) * l.transpose();
                x.columns_mut(b * size, size).copy_from(&block);
            }
        }
    }
    if design.orthonormalize_groups {
        let scale = (n as f64).sqrt();
        for g in partition.groups() {
            let q = x.select_columns(g).qr().q() * scale;
            for (c, &j) in g.iter().enumerate() {
                x.set_column(j, &q.column(c));
            }
        }
    }

    let mut rng = stream_rng(design.seed, rep, STREAM_SIGNAL);
    let mut beta_star = DVector::zeros(p);
    for i in 0..design.sparsity {
        beta_star[i] = match design.signal {
            SignalValues::PlusMinusOne => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
            SignalValues::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    rng.random_range(low..high)
                }
            }
            SignalValues::Constant { value } => value,
        };
    }

    let mut rng = stream_rng(design.seed, rep, STREAM_NOISE);
    let eps = DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        design.sigma * z
    });
    let y = &x * &beta_star + &eps;
    Ok(SimData {
        x,
        y,
        partition,
        beta_star,
        eps,
        sigma: design.sigma,
    })
}

/// How each replication is analysed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodConfig {
    /// Multiplier of the default group weights.
    pub weight_scale: f64,
    pub scaled: ScaledOptions,
    pub projection: ProjectionOptions,
    pub alpha: f64,
    pub large_group_cutoff: usize,
    /// Plug the true noise level into the test instead of the scaled estimate.
    pub oracle_sigma: bool,
    /// Run the group tests; off for noise-level studies.
    pub run_tests: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            weight_scale: 1.0,
            scaled: ScaledOptions::default(),
            projection: ProjectionOptions::default(),
            alpha: 0.05,
            large_group_cutoff: 50,
            oracle_sigma: false,
            run_tests: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestRole {
    /// The first group carrying signal.
    Nonzero,
    /// The first group without signal.
    Null,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestRecord {
    pub role: TestRole,
    pub group: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub k_g: usize,
    pub p_value: f64,
    pub reject: bool,
    pub gap: f64,
    pub tau: f64,
    pub eta_g: f64,
    /// `||P_G X_G (beta_G_hat - beta*_G)||^2 / sigma_used^2`.
    pub pivot: f64,
    /// `||Rem_G|| / sigma_used`.
    pub remainder: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: u64,
    pub sigma_hat: f64,
    /// `||eps|| / sqrt(n)`.
    pub sigma_oracle: f64,
    /// `sqrt(2n) (sigma_hat / sigma - 1)`.
    pub sigma_z: f64,
    pub converged: bool,
    /// `sum_j omega_{*,j} ||X_{G_j} (beta_hat - beta*)_{G_j}|| / (sqrt(n) sigma)`.
    pub prediction_error: f64,
    pub tests: Vec<TestRecord>,
    pub errors: Vec<String>,
}

/// Quantile pairs `(theoretical, empirical)` sorted by probability.
pub type QqPairs = Vec<(f64, f64)>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub design: SimDesign,
    pub method: MethodConfig,
    pub reps: usize,
    pub failures: usize,
    pub mean_sigma: f64,
    pub sd_sigma: f64,
    pub mean_sigma_z: f64,
    pub var_sigma_z: f64,
    pub ks_sigma_z: f64,
    /// Rejection rate of the nonzero group.
    pub tp_rate: Option<f64>,
    /// Rejection rate of the first zero group.
    pub fp_rate: Option<f64>,
    /// KS distance of the null-group `T^2` to `chi^2_{k_G}`.
    pub ks_null_chisq: Option<f64>,
    /// KS distance of the null-group `(T^2 - k) / sqrt(2k)` to `N(0, 1)`.
    pub ks_null_normal: Option<f64>,
    /// KS distance of the nonzero-group pivot to `chi^2_{k_G}`.
    pub ks_pivot_chisq: Option<f64>,
    pub ks_pivot_normal: Option<f64>,
    pub qq_sigma_z: QqPairs,
    pub qq_null_chisq: QqPairs,
    pub qq_null_normal: QqPairs,
    pub qq_pivot_chisq: QqPairs,
    pub records: Vec<RepRecord>,
}

fn group_vars(partition: &GroupPartition, j: usize) -> Vec<usize> {
    partition.group(j).to_vec()
}

fn run_one(design: &SimDesign, method: &MethodConfig, rep: u64) -> Result<RepRecord> {
    let data = generate(design, rep)?;
    let problem = data.problem(method.weight_scale)?;
    let n = design.n as f64;
    let fit = fit_scaled(&problem, &method.scaled)?;
    let sigma_oracle = data.eps.norm() / n.sqrt();
    let omega_star = default_weights(&data.partition, design.n, 1.0)?;
    let h = &fit.beta - &data.beta_star;
    let prediction_error = data
        .partition
        .groups()
        .iter()
        .zip(&omega_star)
        .map(|(g, w)| {
            let hg = DVector::from_iterator(g.len(), g.iter().map(|&i| h[i]));
            w * (problem.columns(g) * hg).norm()
        })
        .sum::<f64>()
        / (n.sqrt() * design.sigma);
    let mut record = RepRecord {
        rep,
        sigma_hat: fit.sigma,
        sigma_oracle,
        sigma_z: (2.0 * n).sqrt() * (fit.sigma / design.sigma - 1.0),
        converged: fit.converged,
        prediction_error,
        tests: Vec::new(),
        errors: Vec::new(),
    };
    if !method.run_tests {
        return Ok(record);
    }
    let mut targets = Vec::new();
    if design.active_groups > 0 {
        targets.push((TestRole::Nonzero, 0));
    }
    if design.active_groups < design.num_groups() {
        targets.push((TestRole::Null, design.active_groups));
    }
    let opts = TestOptions {
        alpha: method.alpha,
        large_group_cutoff: method.large_group_cutoff,
        sigma: if method.oracle_sigma {
            SigmaPlugin::Oracle(design.sigma)
        } else {
            SigmaPlugin::Scaled
        },
        omega_prime: None,
    };
    for (role, j) in targets {
        let g = group_vars(&data.partition, j);
        let outcome = relaxed_projection(
            &problem.x,
            &problem.partition,
            &g,
            &problem.weights,
            &method.projection,
        )
        .and_then(|bundle| {
            let r = group_test(&problem, &bundle, &fit, &opts)?;
            let truth = DVector::from_iterator(g.len(), g.iter().map(|&i| data.beta_star[i]));
            let diff = DVector::from_column_slice(&r.beta_g_hat) - truth;
            let pivot = (bundle.projected_design() * diff).norm() / r.sigma_used;
            let rem =
                crate::inference::bias_remainder(&problem, &bundle, &fit.beta, &data.beta_star)?;
            Ok(TestRecord {
                role,
                group: j,
                t: r.t,
                k_g: r.k_g,
                p_value: r.p_value,
                reject: r.reject,
                gap: bundle.gap,
                tau: bundle.tau,
                eta_g: r.feasibility.eta_g,
                pivot: pivot * pivot,
                remainder: rem.norm() / r.sigma_used,
            })
        });
        match outcome {
            Ok(t) => record.tests.push(t),
            Err(e) => record.errors.push(format!("{role:?} group {}: {e}", j + 1)),
        }
    }
    Ok(record)
}

/// Runs `reps` replications of the fit-project-test pipeline.
///
/// Failed replications are kept with their error messages and counted in
/// `failures`. Results are identical with and without `parallel`.
pub fn run_replications(
    design: &SimDesign,
    method: &MethodConfig,
    reps: usize,
    parallel: bool,
) -> Result<ReplicationSummary> {
    design.validate()?;
    if reps == 0 {
        return Err(Error::InvalidArgument(
            "at least one replication is required".into(),
        ));
    }
    let one = |rep: u64| match run_one(design, method, rep) {
        Ok(r) => r,
        Err(e) => RepRecord {
            rep,
            sigma_hat: f64::NAN,
            sigma_oracle: f64::NAN,
            sigma_z: f64::NAN,
            converged: false,
            prediction_error: f64::NAN,
            tests: Vec::new(),
            errors: vec![e.to_string()],
        },
    };
    let records: Vec<RepRecord> = if parallel {
        (0..reps as u64).into_par_iter().map(one).collect()
    } else {
        (0..reps as u64).map(one).collect()
    };
    Ok(summarize(design, method, records))
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let s = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, s)
}

fn summarize(
    design: &SimDesign,
    method: &MethodConfig,
    records: Vec<RepRecord>,
) -> ReplicationSummary {
    let failures = records.iter().filter(|r| !r.errors.is_empty()).count();
    let sig: Vec<f64> = records
        .iter()
        .map(|r| r.sigma_hat)
        .filter(|s| s.is_finite())
        .collect();
    let z: Vec<f64> = records
        .iter()
        .map(|r| r.sigma_z)
        .filter(|s| s.is_finite())
        .collect();
    let (mean_sigma, var_sigma) = mean_var(&sig);
    let (mean_sigma_z, var_sigma_z) = mean_var(&z);
    let normal = Normal::standard();

    let role_tests = |role: TestRole| -> Vec<&TestRecord> {
        records
            .iter()
            .flat_map(|r| r.tests.iter())
            .filter(|t| t.role == role)
            .collect()
    };
    let rate = |role: TestRole| -> Option<f64> {
        let planned = records.len();
        let tests = role_tests(role);
        let has_role = match role {
            TestRole::Nonzero => design.active_groups > 0,
            TestRole::Null => design.active_groups < design.num_groups(),
        };
        // A test that could not be carried out counts as not rejecting.
        has_role.then(|| tests.iter().filter(|t| t.reject).count() as f64 / planned as f64)
    };
    let chisq_fit = |stats: Vec<(f64, usize)>| -> (Option<f64>, Option<f64>, QqPairs, QqPairs) {
        if stats.is_empty() {
            return (None, None, Vec::new(), Vec::new());
        }
        let k = stats[0].1;
        let same_k = stats.iter().all(|s| s.1 == k);
        let t2: Vec<f64> = stats.iter().map(|s| s.0).collect();
        let std: Vec<f64> = t2
            .iter()
            .map(|v| (v - k as f64) / (2.0 * k as f64).sqrt())
            .collect();
        if !same_k || k == 0 {
            return (None, None, Vec::new(), Vec::new());
        }
        let chi = ChiSquared::new(k as f64).expect("positive degrees of freedom");
        (
            Some(ks_distance(&t2, |x| chi.cdf(x))),
            Some(ks_distance(&std, |x| normal.cdf(x))),
            qq_pairs(&t2, |p| chi.inverse_cdf(p)),
            qq_pairs(&std, |p| normal.inverse_cdf(p)),
        )
    };
    let null: Vec<(f64, usize)> = role_tests(TestRole::Null)
        .iter()
        .map(|t| (t.t * t.t, t.k_g))
        .collect();
    let pivot: Vec<(f64, usize)> = role_tests(TestRole::Nonzero)
        .iter()
        .map(|t| (t.pivot, t.k_g))
        .collect();
    let (ks_null_chisq, ks_null_normal, qq_null_chisq, qq_null_normal) = chisq_fit(null);
    let (ks_pivot_chisq, ks_pivot_normal, qq_pivot_chisq, _) = chisq_fit(pivot);

    ReplicationSummary {
        design: design.clone(),
        method: method.clone(),
        reps: records.len(),
        failures,
        mean_sigma,
        sd_sigma: var_sigma.sqrt(),
        mean_sigma_z,
        var_sigma_z,
        ks_sigma_z: if z.is_empty() {
            f64::NAN
        } else {
            ks_distance(&z, |x| normal.cdf(x))
        },
        tp_rate: if method.run_tests {
            rate(TestRole::Nonzero)
        } else {
            None
        },
        fp_rate: if method.run_tests {
            rate(TestRole::Null)
        } else {
            None
        },
        ks_null_chisq,
        ks_null_normal,
        ks_pivot_chisq,
        ks_pivot_normal,
        qq_sigma_z: qq_pairs(&z, |p| normal.inverse_cdf(p)),
        qq_null_chisq,
        qq_null_normal,
        qq_pivot_chisq,
        records,
    }
}

/// Kolmogorov-Smirnov distance `sup_x |F_m(x) - F(x)|` of a sample to `cdf`.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / m).max((i + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max)
}

/// `(quantile((i + 1/2) / m), x_(i))` for the sorted sample.
pub fn qq_pairs(sample: &[f64], quantile: impl Fn(f64) -> f64) -> QqPairs {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    s.into_iter()
        .enumerate()
        .map(|(i, x)| (quantile((i as f64 + 0.5) / m), x))
        .collect()
}

/// CSV text with header `theoretical_quantile,empirical_quantile`.
pub fn qq_csv(pairs: &[(f64, f64)]) -> String {
    let mut out = String::from("theoretical_quantile,empirical_quantile\n");
    for (t, e) in pairs {
        out.push_str(&format!("{t},{e}\n"));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRow {
    pub n: usize,
    /// Mean of `|sigma_hat / sigma* - 1|` with `sigma* = ||eps|| / sqrt(n)`.
    pub sigma_error: f64,
    /// Mean weighted prediction error.
    pub prediction_error: f64,
}

/// Tracks the two quantities the inference relies on across sample sizes.
pub fn working_assumption_audit(
    template: &SimDesign,
    method: &MethodConfig,
    sample_sizes: &[usize],
    reps: usize,
) -> Result<Vec<AuditRow>> {
    let method = MethodConfig {
        run_tests: false,
        ..method.clone()
    };
    sample_sizes
        .iter()
        .map(|&n| {
            let design = SimDesign {
                n,
                ..template.clone()
            };
            let s = run_replications(&design, &method, reps, true)?;
            let ok: Vec<&RepRecord> = s.records.iter().filter(|r| r.errors.is_empty()).collect();
            let m = ok.len().max(1) as f64;
            Ok(AuditRow {
                n,
                sigma_error: ok
                    .iter()
                    .map(|r| (r.sigma_hat / r.sigma_oracle - 1.0).abs())
                    .sum::<f64>()
                    / m,
                prediction_error: ok.iter().map(|r| r.prediction_error).sum::<f64>() / m,
            })
        })
        .collect()
}

/// Named scenarios with the method settings used for them.
pub fn preset(name: &str) -> Option<(SimDesign, MethodConfig)> {
    let tests_off = MethodConfig {
        run_tests: false,
        ..Default::default()
    };
    let with_scale = |s: f64| MethodConfig {
        weight_scale: s,
        ..Default::default()
    };
    match name {
        "sigma-p200" => Some((
            SimDesign::sigma_study(200),
            MethodConfig {
                weight_scale: SIGMA_STUDY_SCALE,
                ..tests_off
            },
        )),
        "sigma-p2000" => Some((
            SimDesign::sigma_study(2000),
            MethodConfig {
                weight_scale: SIGMA_STUDY_SCALE,
                ..tests_off
            },
        )),
        "small-groups" => Some((
            SimDesign::small_group_study(),
            with_scale(SMALL_GROUP_SCALE),
        )),
        "large-groups" => Some((
            SimDesign::large_group_study(),
            with_scale(LARGE_GROUP_SCALE),
        )),
        "global-null" => Some((SimDesign::global_null(), with_scale(COMPARISON_SCALE))),
        _ => {
            // comparison:<block>:<rho>:<tau>
            let rest = name.strip_prefix("comparison:")?;
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return None;
            }
            let block = parts[0].parse().ok()?;
            let rho = parts[1].parse().ok()?;
            let tau = parts[2].parse().ok()?;
            Some((
                SimDesign::comparison_study(block, rho, tau),
                with_scale(COMPARISON_SCALE),
            ))
        }
    }
}

/// Weight multiplier for the noise-level study.
pub const SIGMA_STUDY_SCALE: f64 = 0.7;
/// Weight multiplier for the small-group distribution study.
pub const SMALL_GROUP_SCALE: f64 = 0.7;
/// Weight multiplier for the large-group distribution study.
pub const LARGE_GROUP_SCALE: f64 = 0.7;
/// Weight multiplier for the power comparison designs.
pub const COMPARISON_SCALE: f64 = 1.0;

pub const PRESET_NAMES: [&str; 6] = [
    "sigma-p200",
    "sigma-p2000",
    "small-groups",
    "large-groups",
    "global-null",
    "comparison:<block>:<rho>:<tau>",
];
