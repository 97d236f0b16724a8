//! Builds a model from a config file and prints the sampled assumption checks.
//!
//! cargo run --example validate_model [-- path/to/model.conf]

use std::path::PathBuf;

use jump_bsde::model::{build_model, validate_model, Config};

fn main() -> jump_bsde::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/costly_jumps.conf")
        });
    let spec = build_model(&Config::load(&path)?)?;
    let marks = spec.mark_space()?;
    println!(
        "model: d = {}, T = {}, x0 = {:?}",
        spec.dim(),
        spec.horizon(),
        spec.x0()
    );
    println!(
        "marks: {:?} with weights {:?}",
        marks.nodes(),
        marks.weights()
    );
    println!("impulse shape: {}", spec.is_impulse_shape());

    let report = validate_model(&spec, 5000, 1);
    for c in &report.checks {
        let verdict = if c.passed { "ok  " } else { "FAIL" };
        println!("[{verdict}] {:<20} {}", c.name, c.detail);
        if let (false, Some(w)) = (c.passed, &c.witness) {
            println!("       witness {w:?}");
        }
    }
    println!("all passed: {}", report.all_passed());
    Ok(())
}
