//! Builds the relaxed projection for a group that straddles two groups of
//! the partition, with both penalties, and prints its diagnostics.
//!
//! ```text
//! cargo run --release --example projection -- 0.1
//! ```
//!
//! The optional argument is the relaxation multiplier `xi` (default 0.3).

use grouplens::model::default_weights;
use grouplens::projection::{relaxed_projection, PenaltyKind, ProjectionOptions};
use grouplens::simulation::{generate, Correlation, SimDesign};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let xi: f64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(0.3);
    let design = SimDesign {
        n: 120,
        p: 60,
        group_size: 3,
        correlation: Correlation::Block { size: 6, rho: 0.6 },
        orthonormalize_groups: false,
        ..SimDesign::global_null()
    };
    let data = generate(&design, 0)?;
    let weights = default_weights(&data.partition, design.n, 1.0)?;
    // Last variable of group 0 and the first two of group 1.
    let target = vec![2, 3, 4];
    for penalty in [PenaltyKind::Frobenius, PenaltyKind::Nuclear] {
        let opts = ProjectionOptions {
            penalty,
            xi,
            ..Default::default()
        };
        let b = relaxed_projection(&data.x, &data.partition, &target, &weights, &opts)?;
        println!(
            "{penalty:?}: k_G {}, gap {:.4}, tau {:.4}, reparametrized {}, dual violation {:.1e}, {} iterations",
            b.k_g(),
            b.gap,
            b.tau,
            b.reparametrized,
            b.dual_violation,
            b.iterations
        );
        let mut worst: Vec<_> = b.outside.iter().filter(|o| o.bias > 0.0).collect();
        worst.sort_by(|a, c| c.bias.total_cmp(&a.bias));
        for o in worst.iter().take(3) {
            println!(
                "  group {:>2}: bias {:.4}, dual norm {:.4} <= {:.4}",
                o.group, o.bias, o.dual_norm, o.xi_omega
            );
        }
    }
    Ok(())
}
