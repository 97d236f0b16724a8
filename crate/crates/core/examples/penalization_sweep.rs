//! Regression solver across penalization levels with common random numbers.
//! The penalized values climb towards the constrained value as n grows.

use jump_bsde::qvi::{solve_penalized_ipde, Boundary, FdScheme};
use jump_bsde::{
    penalization_sweep, CoefficientSpec, MarkMeasureSpec, ModelBuilder, RegressionBasis, SpaceGrid,
    TimeGrid,
};

fn main() -> jump_bsde::Result<()> {
    // Call payoff; jumps of size e in [-1, 1] cost 0.3 each.
    let spec = ModelBuilder::new(1)
        .horizon(0.5)
        .drift(CoefficientSpec::constant(0.1))
        .diffusion(CoefficientSpec::constant(0.4))
        .jump(CoefficientSpec::scaled_mark_shift(1.0))
        .cost(CoefficientSpec::constant(-0.3))
        .terminal(CoefficientSpec::positive_part(1.0, 0.2))
        .marks(MarkMeasureSpec::uniform(-1.0, 1.0, 2.0)?, 4)
        .build()?;
    let marks = spec.mark_space()?;
    let grid = TimeGrid::new(spec.horizon(), 25)?;
    let levels = [0.0, 1.0, 2.0, 4.0, 8.0];

    let table = penalization_sweep(
        &spec,
        &marks,
        &grid,
        &RegressionBasis::polynomial(4),
        &levels,
        20_000,
        7,
    )?;

    let space = SpaceGrid::new(-3.0, 3.0, 0.05)?;
    let scheme = FdScheme::with_cfl(&spec, &marks, space, Boundary::default(), 8.0)?;
    println!(
        "{:>5} {:>10} {:>9} {:>10} {:>10}",
        "n", "y0", "stderr", "max dK", "FD"
    );
    for row in &table.rows {
        let fd = solve_penalized_ipde(&spec, &marks, &scheme, row.n)?.value_at(0, 0.0);
        println!(
            "{:>5} {:>10.5} {:>9.5} {:>10.5} {:>10.5}",
            row.n, row.y0, row.stderr, row.max_dk, fd
        );
    }
    println!("monotone within 3 standard errors: {}", table.is_monotone());
    Ok(())
}
