//! Simulates a jump diffusion, prints moment diagnostics and round-trips the
//! binary path dump.

use jump_bsde::forward::path_moments;
use jump_bsde::{
    simulate_paths, CoefficientSpec, MarkMeasureSpec, ModelBuilder, PathBundle, TimeGrid,
};

fn main() -> jump_bsde::Result<()> {
    // Jumps of size e, e uniform on [-1, 1], at total rate 2.
    let spec = ModelBuilder::new(1)
        .horizon(1.0)
        .x0(vec![0.5])
        .drift(CoefficientSpec::constant(0.1))
        .diffusion(CoefficientSpec::constant(0.4))
        .jump(CoefficientSpec::scaled_mark_shift(1.0))
        .marks(MarkMeasureSpec::uniform(-1.0, 1.0, 2.0)?, 8)
        .build()?;
    let marks = spec.mark_space()?;
    let grid = TimeGrid::new(spec.horizon(), 50)?;
    let bundle = simulate_paths(&spec, &marks, &grid, 20_000, 42)?;

    let jumps: usize = (0..bundle.paths()).map(|p| bundle.jump_count(p)).sum();
    println!(
        "mean jump count {:.4} (expected 2)",
        jumps as f64 / bundle.paths() as f64
    );

    let moments = path_moments(&bundle);
    println!("E sup|X|^2      {:.4}", moments.mean_sup_square);
    for i in (0..=grid.steps()).step_by(10) {
        println!(
            "t = {:.2}  E X = {:+.4}  E X^2 = {:.4}",
            grid.time(i),
            moments.means[i][0],
            moments.second_moments[i]
        );
    }

    let mut dump = Vec::new();
    bundle.write_to(&mut dump)?;
    let back = PathBundle::read_from(dump.as_slice())?;
    println!(
        "dump: {} bytes, round trip exact: {}",
        dump.len(),
        back == bundle
    );
    Ok(())
}
