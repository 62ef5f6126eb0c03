//! Fits the scaled group Lasso on a simulated sparse problem and compares
//! the noise estimate with the oracle `||eps|| / sqrt(n)`.
//!
//! ```text
//! cargo run --release --example fit_scaled
//! ```

use grouplens::group_lasso::kkt_certificate;
use grouplens::model::RegressionProblem;
use grouplens::model::{default_weights, SparsityPattern};
use grouplens::scaled::{fit_scaled, ScaledOptions};
use grouplens::simulation::{generate, SimDesign};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let design = SimDesign::sigma_study(200);
    let data = generate(&design, 0)?;
    let weights = default_weights(&data.partition, design.n, 0.7)?;
    let problem = RegressionProblem::new(data.x, data.y, data.partition, weights)?;
    let fit = fit_scaled(&problem, &ScaledOptions::default())?;

    let oracle = data.eps.norm() / (design.n as f64).sqrt();
    println!(
        "converged {} after {} noise updates",
        fit.converged, fit.iterations
    );
    println!("sigma_hat {:.4}, oracle {:.4}", fit.sigma, oracle);

    let found = SparsityPattern::of(&problem.partition, &fit.beta);
    let truth = SparsityPattern::of(&problem.partition, &data.beta_star);
    println!("selected groups {:?}", found.active_groups);
    println!("true groups     {:?}", truth.active_groups);
    let penalties: Vec<f64> = problem.weights.iter().map(|w| w * fit.sigma).collect();
    let cert = kkt_certificate(&problem, &penalties, &fit.beta);
    println!("max KKT violation {:.2e}", cert.max_violation);
    Ok(())
}
