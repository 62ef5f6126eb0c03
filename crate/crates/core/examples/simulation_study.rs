//! Runs a named simulation scenario and prints its summary.
//!
//! ```text
//! cargo run --release --example simulation_study -- small-groups 100
//! cargo run --release --example simulation_study -- comparison:5:0.9:1 100 5.0
//! ```
//!
//! The optional third argument overrides the weight multiplier.

use grouplens::simulation::{preset, run_replications, PRESET_NAMES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map(String::as_str).unwrap_or("small-groups");
    let reps: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(50);
    let Some((design, mut method)) = preset(name) else {
        eprintln!(
            "unknown scenario {name}; known: {}",
            PRESET_NAMES.join(", ")
        );
        std::process::exit(2);
    };
    if let Some(s) = args.get(2) {
        method.weight_scale = s.parse()?;
    }
    let t0 = std::time::Instant::now();
    let s = run_replications(&design, &method, reps, true)?;
    println!(
        "scenario {name}, {reps} replications, weight scale {}",
        method.weight_scale
    );
    println!("  failures        {}", s.failures);
    println!(
        "  sigma_hat       {:.4} (sd {:.4})",
        s.mean_sigma, s.sd_sigma
    );
    println!(
        "  sigma z         mean {:.3}, var {:.3}, KS {:.3}",
        s.mean_sigma_z, s.var_sigma_z, s.ks_sigma_z
    );
    let show = |label: &str, v: Option<f64>| {
        if let Some(v) = v {
            println!("  {label:<15} {v:.3}");
        }
    };
    show("TP", s.tp_rate);
    show("FP", s.fp_rate);
    show("KS null chi2", s.ks_null_chisq);
    show("KS null normal", s.ks_null_normal);
    show("KS pivot chi2", s.ks_pivot_chisq);
    show("KS pivot normal", s.ks_pivot_normal);
    let errors: Vec<&String> = s.records.iter().flat_map(|r| &r.errors).take(3).collect();
    for e in errors {
        println!("  error: {e}");
    }
    println!("  elapsed {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
