//! Library equivalent of `jump-bsde solve`: load a config, override a few
//! keys, run every selected solver and print the summary.
//!
//! cargo run --release --example run_experiment [-- path/to/model.conf [out-dir]]

use std::path::PathBuf;

use jump_bsde::experiment::{load_config, run_experiment, ExperimentPlan};

fn main() -> jump_bsde::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/impulse.conf")
    });
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("jump-bsde-example"));

    let cfg = load_config(&config, &[("seed", "5".to_string())])?;
    let plan = ExperimentPlan::from_config(&cfg, &out)?;
    let outcome = run_experiment(&plan)?;
    print!("{}", outcome.summary);
    if let Some(table) = &outcome.comparison {
        println!(
            "comparison against {} over {} rows",
            table.reference,
            table.rows.len()
        );
    }
    println!(
        "artifacts in {} (exit code {})",
        out.display(),
        outcome.exit_code()
    );
    Ok(())
}
