//! Tests a zero group and a nonzero group on a correlated design, and checks
//! whether the true coefficients fall inside the confidence ellipsoid.
//!
//! ```text
//! cargo run --release --example group_test
//! ```

use grouplens::inference::{confidence_region_contains, group_test, TestOptions};
use grouplens::model::{default_weights, RegressionProblem};
use grouplens::projection::{relaxed_projection, ProjectionOptions};
use grouplens::scaled::{fit_scaled, ScaledOptions};
use grouplens::simulation::{generate, Correlation, SimDesign};
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let design = SimDesign {
        n: 300,
        p: 400,
        correlation: Correlation::Block { size: 4, rho: 0.5 },
        ..SimDesign::small_group_study()
    };
    let data = generate(&design, 1)?;
    let weights = default_weights(&data.partition, design.n, 0.7)?;
    let problem = RegressionProblem::new(data.x, data.y, data.partition, weights)?;
    let init = fit_scaled(&problem, &ScaledOptions::default())?;
    println!("sigma_hat {:.4} (true {})", init.sigma, design.sigma);

    // Groups 0..active_groups carry signal; the next one is zero.
    for j in [0, design.active_groups] {
        let target = problem.partition.group(j).to_vec();
        let bundle = relaxed_projection(
            &problem.x,
            &problem.partition,
            &target,
            &problem.weights,
            &ProjectionOptions::default(),
        )?;
        let res = group_test(&problem, &bundle, &init, &TestOptions::default())?;
        let truth = DVector::from_iterator(target.len(), target.iter().map(|&i| data.beta_star[i]));
        let covered = confidence_region_contains(&res, &bundle, &truth)?;
        println!(
            "group {j}: T {:.3}, k_G {}, p-value {:.3e}, gap {:.3}, tau {:.3}, truth covered {covered}",
            res.t, res.k_g, res.p_value, bundle.gap, bundle.tau
        );
        println!("  beta_G_hat {:.3?}", res.beta_g_hat);
        println!("  beta_G*    {:.3?}", truth.as_slice());
    }
    Ok(())
}
