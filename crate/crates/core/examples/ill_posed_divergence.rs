//! When every jump pays a positive gain at no cost the constraint cannot be
//! met and the penalized values grow linearly in n. Three solvers agree.

use jump_bsde::dual::dual_value_lattice;
use jump_bsde::qvi::{solve_penalized_ipde, Boundary, FdScheme};
use jump_bsde::{
    penalization_sweep, CoefficientSpec, MarkMeasureSpec, ModelBuilder, RegressionBasis, SpaceGrid,
    TimeGrid,
};

fn main() -> jump_bsde::Result<()> {
    let spec = ModelBuilder::new(1)
        .diffusion(CoefficientSpec::constant(1.0))
        .cost(CoefficientSpec::constant(1.0))
        .marks(MarkMeasureSpec::uniform(0.0, 1.0, 1.0)?, 1)
        .build()?;
    let marks = spec.mark_space()?;
    let levels = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

    let grid = TimeGrid::new(1.0, 20)?;
    let sweep = penalization_sweep(
        &spec,
        &marks,
        &grid,
        &RegressionBasis::polynomial(3),
        &levels,
        10_000,
        1,
    )?;

    let space = SpaceGrid::new(-4.0, 4.0, 0.1)?;
    let scheme = FdScheme::with_cfl(&spec, &marks, space, Boundary::default(), 32.0)?;
    println!(
        "{:>4} {:>12} {:>12} {:>12}",
        "n", "regression", "ipde", "lattice"
    );
    for row in &sweep.rows {
        let ipde = solve_penalized_ipde(&spec, &marks, &scheme, row.n)?.value_at(0, 0.0);
        let dual = dual_value_lattice(&spec, &marks, &scheme, row.n)?.value_at(0, 0.0);
        println!(
            "{:>4} {:>12.6} {:>12.6} {:>12.6}",
            row.n, row.y0, ipde, dual
        );
    }
    println!("no limit exists: Y^n = n for every n");
    Ok(())
}
