//! Drives the command-line interface in-process: simulate a data set, fit
//! it, test one of its groups and print the resulting JSON.
//!
//! ```text
//! cargo run --release --example cli_round_trip
//! ```

use grouplens::cli::run_from;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("grouplens-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let spec = r#"{"n": 200, "p": 80, "group_size": 4, "correlation": {"type": "identity"},
        "active_groups": 2, "sparsity": 8, "signal": {"type": "plus_minus_one"}, "sigma": 1.0,
        "orthonormalize_groups": true, "seed": 7}"#;
    let steps: Vec<Vec<String>> = vec![
        vec![
            "simulate".into(),
            "--spec".into(),
            spec.into(),
            "--reps".into(),
            "5".into(),
            "--out".into(),
            p("sim.json"),
            "--emit-dir".into(),
            p(""),
        ],
        vec![
            "fit".into(),
            "--design".into(),
            p("design.csv"),
            "--response".into(),
            p("response.csv"),
            "--groups".into(),
            p("groups.csv"),
            "--out".into(),
            p("fit.json"),
        ],
        vec![
            "test".into(),
            "--design".into(),
            p("design.csv"),
            "--response".into(),
            p("response.csv"),
            "--groups".into(),
            p("groups.csv"),
            "--group".into(),
            "1".into(),
            "--out".into(),
            p("test.json"),
        ],
    ];
    for args in steps {
        let name = args[0].clone();
        let code = run_from(std::iter::once("grouplens".to_string()).chain(args));
        println!("{name}: exit code {code}");
    }
    let test: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("test.json"))?)?;
    println!(
        "group 1: T {}, p-value {}, feasible {}",
        test["T"], test["p_value"], test["feasible"]
    );
    println!("outputs in {}", dir.display());
    Ok(())
}
