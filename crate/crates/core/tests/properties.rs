mod common;

use common::*;
use grouplens::diagnostics::{estimate_all_path, ConeContext};
use grouplens::group_lasso::{fit_group_lasso, GroupLassoOptions};
use grouplens::inference::{bias_remainder, debias_beta, group_test, SigmaPlugin, TestOptions};
use grouplens::model::{default_weights, GroupPartition, RegressionProblem};
use grouplens::numerics::subspace_distance;
use grouplens::projection::{relaxed_projection, ProjectionBundle, ProjectionOptions};
use grouplens::scaled::{fit_scaled, ScaledOptions};
use grouplens::simulation::{run_replications, MethodConfig, SimDesign};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Random design with `m` groups, a sparse truth on the first `s` groups
/// and Gaussian noise of level `sigma`.
struct Draw {
    problem: RegressionProblem,
    beta_star: DVector<f64>,
    eps: DVector<f64>,
}

fn draw(seed: u64, n: usize, sizes: &[usize], s: usize, sigma: f64, scale: f64) -> Draw {
    let mut r = rng(seed);
    let part = GroupPartition::contiguous(sizes).unwrap();
    let p = part.num_vars();
    let x = gaussian_matrix(&mut r, n, p);
    let mut beta_star = DVector::zeros(p);
    for j in 0..s {
        for &i in part.group(j) {
            beta_star[i] = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    let eps = gaussian_vector(&mut r, n) * sigma;
    let y = &x * &beta_star + &eps;
    let w = default_weights(&part, n, scale).unwrap();
    Draw {
        problem: RegressionProblem::new(x, y, part, w).unwrap(),
        beta_star,
        eps,
    }
}

fn tight() -> GroupLassoOptions {
    GroupLassoOptions {
        kkt_tol: 1e-12,
        max_iter: 200_000,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn partition_is_a_bijection(seed in 0u64..10_000, p in 1usize..60, m_frac in 0.05f64..1.0) {
        let mut r = rng(seed);
        let m = ((p as f64 * m_frac).ceil() as usize).clamp(1, p);
        let sizes = random_sizes(&mut r, p, m);
        let mut labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(j, &d)| vec![j; d]).collect();
        for i in (1..labels.len()).rev() {
            labels.swap(i, r.random_range(0..=i));
        }
        let part = GroupPartition::from_labels(&labels).unwrap();
        prop_assert_eq!(part.num_vars(), p);
        prop_assert_eq!(part.num_groups(), m);
        let mut seen = vec![0usize; p];
        for (j, g) in part.groups().iter().enumerate() {
            prop_assert!(!g.is_empty());
            for &i in g {
                seen[i] += 1;
                prop_assert_eq!(part.group_of(i), j);
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let mut sorted = part.sizes();
        sorted.sort_unstable();
        let mut expected = sizes.clone();
        expected.sort_unstable();
        prop_assert_eq!(sorted, expected);
    }

    #[test]
    fn weights_are_homogeneous_in_scale(seed in 0u64..10_000, n in 5usize..500, c in 0.01f64..50.0) {
        let mut r = rng(seed);
        let sizes = random_sizes(&mut r, 30, 7);
        let part = GroupPartition::contiguous(&sizes).unwrap();
        let w1 = default_weights(&part, n, 1.0).unwrap();
        let wc = default_weights(&part, n, c).unwrap();
        for (a, b) in w1.iter().zip(&wc) {
            prop_assert!((a * c - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn sweeps_never_increase_the_objective(seed in 0u64..10_000, scale in 0.2f64..2.0) {
        let d = draw(seed, 30, &[3, 2, 4, 1, 3, 2], 2, 0.5, scale);
        let fit = fit_group_lasso(&d.problem, &d.problem.weights, &tight()).unwrap();
        for w in fit.trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn solution_is_homogeneous(seed in 0u64..10_000, c in 0.1f64..20.0) {
        let d = draw(seed, 25, &[2, 3, 2, 4, 2], 2, 0.7, 1.0);
        let w = d.problem.weights.clone();
        let base = fit_group_lasso(&d.problem, &w, &tight()).unwrap();
        let scaled = d.problem.with_response(&d.problem.y * c);
        let wc: Vec<f64> = w.iter().map(|v| v * c).collect();
        let fit_c = fit_group_lasso(&scaled, &wc, &tight()).unwrap();
        prop_assert!(rel_err(&fit_c.beta, &(&base.beta * c)) < 1e-8);
    }

    /// When every noise score sits below `(xi - 1) / (xi + 1)` of its
    /// penalty, the estimation error lies in the cone with relaxation `xi`.
    #[test]
    fn error_lies_in_the_cone(seed in 0u64..10_000, xi in 1.2f64..4.0, slack in 1.0f64..2.0) {
        let d = draw(seed, 40, &[2, 3, 2, 2, 3, 2, 2], 2, 1.0, 1.0);
        let n = d.problem.n() as f64;
        let part = &d.problem.partition;
        let score = d.problem.x.tr_mul(&d.eps) / n;
        let base = &d.problem.weights;
        let worst = part
            .groups()
            .iter()
            .zip(base)
            .map(|(g, w)| g.iter().map(|&i| score[i] * score[i]).sum::<f64>().sqrt() / w)
            .fold(0.0, f64::max);
        let lambda: Vec<f64> = base.iter().map(|w| w * worst * slack * (xi + 1.0) / (xi - 1.0)).collect();
        let fit = fit_group_lasso(&d.problem, &lambda, &tight()).unwrap();
        let h = &fit.beta - &d.beta_star;
        let (mut inside, mut outside) = (0.0, 0.0);
        for (j, g) in part.groups().iter().enumerate() {
            let hj = g.iter().map(|&i| h[i] * h[i]).sum::<f64>().sqrt();
            if j < 2 { inside += lambda[j] * hj } else { outside += lambda[j] * hj }
        }
        prop_assert!(outside <= xi * inside + 1e-9, "outside {outside} inside {inside}");
    }

    /// The scaled fit is a fixed point: the noise estimate matches its own
    /// residual, and the coefficients solve the group Lasso at `sigma * omega`.
    #[test]
    fn scaled_fit_is_a_fixed_point(seed in 0u64..10_000, sigma in 0.2f64..3.0) {
        let d = draw(seed, 60, &[3; 12], 2, sigma, 1.0);
        let opts = ScaledOptions { conv_tol: 1e-9, inner_kkt_tol: 1e-12, ..Default::default() };
        let fit = fit_scaled(&d.problem, &opts).unwrap();
        prop_assert!(fit.converged);
        let n = d.problem.n() as f64;
        let resid = (&d.problem.y - &d.problem.x * &fit.beta).norm() / n.sqrt();
        prop_assert!((resid / fit.sigma - 1.0).abs() <= 1e-8);
        let pen: Vec<f64> = d.problem.weights.iter().map(|w| w * fit.sigma).collect();
        let direct = fit_group_lasso(&d.problem, &pen, &tight()).unwrap();
        prop_assert!(rel_err(&fit.beta, &direct.beta) < 1e-6);
    }

    /// Multiplying `y` by `c` scales the coefficients and the noise estimate
    /// and leaves the statistic and p-value unchanged.
    #[test]
    fn pipeline_is_scale_equivariant(seed in 0u64..10_000, c in 0.05f64..30.0) {
        let d = draw(seed, 50, &[2; 15], 2, 1.0, 1.0);
        let target = d.problem.partition.group(0).to_vec();
        let bundle = relaxed_projection(
            &d.problem.x, &d.problem.partition, &target, &d.problem.weights, &ProjectionOptions::default(),
        ).unwrap();
        let opts = ScaledOptions { conv_tol: 1e-10, inner_kkt_tol: 1e-12, ..Default::default() };
        let a = fit_scaled(&d.problem, &opts).unwrap();
        let scaled = d.problem.with_response(&d.problem.y * c);
        let b = fit_scaled(&scaled, &opts).unwrap();
        prop_assert!((b.sigma / (a.sigma * c) - 1.0).abs() < 1e-7);
        prop_assert!(rel_err(&b.beta, &(&a.beta * c)) < 1e-6);
        let ta = group_test(&d.problem, &bundle, &a, &TestOptions::default());
        let tb = group_test(&scaled, &bundle, &b, &TestOptions::default());
        match (ta, tb) {
            (Ok(ta), Ok(tb)) => {
                prop_assert!((ta.t - tb.t).abs() <= 1e-6 * ta.t.max(1.0));
                prop_assert!((ta.p_value - tb.p_value).abs() <= 1e-6);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "feasibility depends on scale"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Replacing the score matrix `Z` by `Z C` for invertible `C` changes
    /// neither the projection nor the de-biased estimate.
    #[test]
    fn score_basis_change_is_invisible(seed in 0u64..10_000) {
        let d = draw(seed, 20, &[2, 3, 1, 2, 3, 2], 2, 0.7, 1.0);
        let mut r = rng(seed ^ 0x5a5a);
        let target = d.problem.partition.group(1).to_vec();
        let z = gaussian_matrix(&mut r, 20, target.len());
        let c = gaussian_matrix(&mut r, target.len(), target.len()) + DMatrix::identity(target.len(), target.len()) * 3.0;
        let opts = ProjectionOptions::default();
        let make = |z: DMatrix<f64>| ProjectionBundle::from_score(
            &d.problem.x, &d.problem.partition, &target, z, &d.problem.weights, &opts,
        ).unwrap();
        let b1 = make(z.clone());
        let b2 = make(&z * c);
        prop_assert!(subspace_distance(&b1.basis, &b2.basis) <= 1e-8);
        let p1 = projector(&b1.z);
        let p2 = projector(&b2.z);
        prop_assert!((&p1 - &p2).amax() <= 1e-8);
        let init = &d.beta_star + gaussian_vector(&mut r, d.problem.p()) * 0.2;
        let e1 = debias_beta(&init, &d.problem, &b1).unwrap();
        let e2 = debias_beta(&init, &d.problem, &b2).unwrap();
        prop_assert!(rel_err(&e1, &e2) <= 1e-8);
    }

    /// `P X_G (beta_hat_G - beta*_G) = P eps - Rem_G` for any initial estimate.
    #[test]
    fn error_splits_into_noise_and_remainder(seed in 0u64..10_000) {
        let d = draw(seed, 24, &[2, 2, 3, 1, 2, 3, 2], 3, 0.5, 1.0);
        let mut r = rng(seed ^ 0xa5a5);
        let target = d.problem.partition.group(0).to_vec();
        let bundle = relaxed_projection(
            &d.problem.x, &d.problem.partition, &target, &d.problem.weights, &ProjectionOptions::default(),
        ).unwrap();
        let init = &d.beta_star + gaussian_vector(&mut r, d.problem.p()) * 0.4;
        let bhat = debias_beta(&init, &d.problem, &bundle).unwrap();
        let star_g = sub(&d.beta_star, &target);
        let proj = projector(&bundle.z);
        let lhs = &proj * cols(&d.problem.x, &target) * (bhat - star_g);
        let rem = bias_remainder(&d.problem, &bundle, &init, &d.beta_star).unwrap();
        let rhs = &proj * &d.eps - rem;
        prop_assert!(rel_err(&lhs, &rhs) <= 1e-8);
    }

    #[test]
    fn relaxed_projection_certificates(seed in 0u64..10_000, xi in 0.3f64..3.0) {
        let d = draw(seed, 30, &[2, 3, 2, 1, 3, 2, 2, 3], 2, 1.0, 1.0);
        let target = d.problem.partition.union_of(&[0, 1]);
        let b = relaxed_projection(
            &d.problem.x, &d.problem.partition, &target, &d.problem.weights,
            &ProjectionOptions { xi, ..Default::default() },
        ).unwrap();
        let sn = (d.problem.n() as f64).sqrt();
        for o in &b.outside {
            let q = projector(&cols(&d.problem.x, &o.remainder));
            let dual = (&q * &b.z / sn).norm();
            prop_assert!(dual <= xi * d.problem.weights[o.group] * (1.0 + 1e-6) + 1e-10);
        }
        if b.gap < 1.0 {
            prop_assert!((b.tau * (1.0 - b.gap * b.gap).sqrt() - 1.0).abs() <= 1e-6);
        }
    }

    /// With exact orthogonalization and the least-squares noise estimate the
    /// statistic reduces to the classical F statistic.
    #[test]
    fn exact_projection_reduces_to_f_test(seed in 0u64..10_000, j in 0usize..5) {
        let d = draw(seed, 40, &[2, 3, 2, 1, 3], 2, 1.0, 1.0);
        let x = &d.problem.x;
        let y = &d.problem.y;
        let (n, p) = (x.nrows(), x.ncols());
        let target = d.problem.partition.group(j).to_vec();
        let bundle = relaxed_projection(
            x, &d.problem.partition, &target, &d.problem.weights,
            &ProjectionOptions { xi: 0.0, ..Default::default() },
        ).unwrap();
        let init = fit_scaled(&d.problem, &ScaledOptions::default()).unwrap();
        let res = group_test(&d.problem, &bundle, &init, &TestOptions {
            sigma: SigmaPlugin::DegreesAdjusted,
            ..Default::default()
        }).unwrap();
        let rest: Vec<usize> = (0..p).filter(|i| !target.contains(i)).collect();
        let rss_full = (y - projector(x) * y).norm_squared();
        let rss_reduced = (y - projector(&cols(x, &rest)) * y).norm_squared();
        let k = target.len() as f64;
        let f = ((rss_reduced - rss_full) / k) / (rss_full / (n - p) as f64);
        prop_assert!((res.t * res.t / k - f).abs() <= 1e-8 * f.max(1.0), "{} vs {}", res.t * res.t / k, f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Bracketing of the noise estimate around `||eps|| / sqrt(n)` when the
    /// noise scores are dominated by the penalty. The cone invertibility
    /// factor is taken as 1; when that makes the bracket vacuous, or the
    /// score event fails, only a coarse relative bound is checked.
    #[test]
    fn noise_estimate_is_bracketed(seed in 0u64..10_000) {
        let xi = 3.0;
        let d = draw(seed, 1000, &[2; 10], 1, 1.0, 2.5);
        let n = d.problem.n() as f64;
        let fit = fit_scaled(&d.problem, &ScaledOptions { conv_tol: 1e-9, ..Default::default() }).unwrap();
        let oracle = d.eps.norm() / n.sqrt();
        let w = &d.problem.weights;
        let mu = 2.0 * xi * w[0] * w[0];
        let tau_minus = 2.0 * mu * (xi - 1.0) / (xi + 1.0);
        let tau_plus = tau_minus / 2.0 + mu;
        let score = d.problem.x.tr_mul(&d.eps);
        let event = d.problem.partition.groups().iter().zip(w).all(|(g, &wj)| {
            let s = g.iter().map(|&i| score[i] * score[i]).sum::<f64>().sqrt();
            s / (wj * n * oracle / (1.0 + tau_minus).sqrt()) < (xi - 1.0) / (xi + 1.0)
        });
        if event && tau_plus < 1.0 {
            prop_assert!(fit.sigma >= oracle / (1.0 + tau_minus).sqrt() * (1.0 - 1e-8));
            prop_assert!(fit.sigma <= oracle / (1.0 - tau_plus).sqrt() * (1.0 + 1e-8));
        } else {
            eprintln!("seed {seed}: bracket inconclusive (event {event}, tau_plus {tau_plus:.3})");
            prop_assert!((fit.sigma / oracle - 1.0).abs() <= 0.5);
        }
    }

    /// Bounds along the relaxation path respect the pointwise ordering and
    /// shrink as the cone grows.
    #[test]
    fn cone_constants_are_ordered_and_monotone(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let sizes = [2, 2, 1, 3, 2];
        let part = GroupPartition::contiguous(&sizes).unwrap();
        let x = gaussian_matrix(&mut r, 15, part.num_vars());
        let w = default_weights(&part, 15, 1.0).unwrap();
        let ctx = ConeContext::new(&x, &part, &w, &[0, 3], None).unwrap();
        let reports = estimate_all_path(&ctx, &[1.5, 2.0, 3.0], 400, seed).unwrap();
        for rep in &reports {
            prop_assert!(rep.ordering_holds);
            prop_assert_eq!(rep.ordering_violations, 0);
        }
        for pair in reports.windows(2) {
            prop_assert!(pair[1].re.upper_bound <= pair[0].re.upper_bound * (1.0 + 1e-12));
            prop_assert!(pair[1].cc.upper_bound <= pair[0].cc.upper_bound * (1.0 + 1e-12));
            prop_assert!(pair[1].scif1.upper_bound <= pair[0].scif1.upper_bound * (1.0 + 1e-12));
        }
    }
}

#[test]
fn replications_do_not_depend_on_threading() {
    let design = SimDesign {
        n: 80,
        p: 40,
        group_size: 4,
        ..SimDesign::small_group_study()
    };
    let method = MethodConfig::default();
    let serial = run_replications(&design, &method, 6, false).unwrap();
    let parallel = run_replications(&design, &method, 6, true).unwrap();
    assert_eq!(
        serde_json::to_string(&serial).unwrap(),
        serde_json::to_string(&parallel).unwrap()
    );
    let again = run_replications(&design, &method, 6, true).unwrap();
    assert_eq!(
        serde_json::to_string(&parallel).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
}
