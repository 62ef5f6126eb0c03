//! Estimates the restricted eigenvalue, compatibility constant and sign-
//! restricted cone invertibility factor along a grid of cone sizes.
//!
//! ```text
//! cargo run --release --example cone_constants
//! ```

use grouplens::diagnostics::{estimate_all_path, ConeContext};
use grouplens::model::default_weights;
use grouplens::simulation::{generate, Correlation, SimDesign};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for rho in [0.0, 0.8] {
        let design = SimDesign {
            n: 60,
            p: 40,
            group_size: 4,
            correlation: Correlation::Block { size: 4, rho },
            orthonormalize_groups: false,
            ..SimDesign::global_null()
        };
        let data = generate(&design, 0)?;
        let weights = default_weights(&data.partition, design.n, 1.0)?;
        let ctx = ConeContext::new(&data.x, &data.partition, &weights, &[0, 1], None)?;
        println!("block correlation {rho}");
        for r in estimate_all_path(&ctx, &[1.0, 2.0, 4.0], 1000, 0)? {
            println!(
                "  xi {:>3}: RE {:.4}  CC {:.4}  SCIF1 {:.4}  ordering {}",
                r.xi, r.re.upper_bound, r.cc.upper_bound, r.scif1.upper_bound, r.ordering_holds
            );
        }
    }
    Ok(())
}
