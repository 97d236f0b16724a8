//! Impulse control: face-lifted terminal data, the QVI solution, its discrete
//! residual, and the penalized values approaching it from below.

use std::fs::File;

use jump_bsde::qvi::{
    facelift_terminal, residual_check, solve_penalized_ipde, solve_qvi, Boundary, FdScheme,
};
use jump_bsde::{CoefficientSpec, MarkMeasureSpec, ModelBuilder, SpaceGrid};

fn main() -> jump_bsde::Result<()> {
    // Shift the state up by one at cost 0.1; payoff max(x, 0).
    let spec = ModelBuilder::new(1)
        .diffusion(CoefficientSpec::constant(0.5))
        .jump(CoefficientSpec::constant(1.0))
        .cost(CoefficientSpec::constant(-0.1))
        .terminal(CoefficientSpec::positive_part(1.0, 0.0))
        .marks(MarkMeasureSpec::atoms(vec![(0.5, 1.0)])?, 1)
        .build()?;
    let marks = spec.mark_space()?;
    let space = SpaceGrid::new(-4.0, 4.0, 0.05)?;
    let scheme = FdScheme::with_cfl(&spec, &marks, space, Boundary::default(), 64.0)?;
    println!(
        "{} time steps, CFL ratio {:.3}",
        scheme.time.steps(),
        scheme.cfl_ratio(&spec, &marks, 64.0)
    );

    let lift = facelift_terminal(&spec, &marks, &scheme)?;
    let j0 = scheme.space.nearest(0.0);
    println!(
        "face-lift converged in {} iterations, w(0) = {:.4}",
        lift.iterations, lift.values[j0]
    );

    let v = solve_qvi(&spec, &marks, &scheme)?;
    println!("QVI v(0, 0) = {:.6}", v.value_at(0, 0.0));

    let report = residual_check(&v, &spec, &marks, &scheme);
    println!(
        "residual max {:.3e} (bound {:.3e}), PDE branch {:.1}%, obstacle branch {:.1}%",
        report.max_abs,
        report.bound,
        100.0 * report.pde_fraction,
        100.0 * report.obstacle_fraction
    );
    let path = std::env::temp_dir().join("qvi_residual.csv");
    report.write_csv(File::create(&path)?)?;
    println!("residuals written to {}", path.display());

    for n in [1.0, 4.0, 16.0, 64.0] {
        let y = solve_penalized_ipde(&spec, &marks, &scheme, n)?.value_at(0, 0.0);
        println!("penalized n = {n:>3}: {y:.6}");
    }
    Ok(())
}
