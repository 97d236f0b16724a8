//! Iterated optimal stopping: the m-th iterate allows at most m impulses and
//! increases towards the QVI value. The payoff is capped at one, so only a
//! couple of impulses are ever worth their cost.

use jump_bsde::qvi::{iterated_optimal_stopping_all, solve_qvi, Boundary, FdScheme};
use jump_bsde::{CoefficientSpec, MarkMeasureSpec, ModelBuilder, SpaceGrid};

fn main() -> jump_bsde::Result<()> {
    let spec = ModelBuilder::new(1)
        .horizon(1.0)
        .drift(CoefficientSpec::constant(-0.3))
        .diffusion(CoefficientSpec::constant(0.6))
        .jump(CoefficientSpec::constant(0.75))
        .cost(CoefficientSpec::constant(-0.05))
        .terminal(CoefficientSpec::tabulated(&[(0.0, 0.0), (1.0, 1.0)]))
        .marks(MarkMeasureSpec::atoms(vec![(0.5, 1.0)])?, 1)
        .build()?;
    let marks = spec.mark_space()?;
    let space = SpaceGrid::new(-4.0, 4.0, 0.05)?;
    let scheme = FdScheme::with_cfl(&spec, &marks, space, Boundary::default(), 0.0)?;

    let qvi = solve_qvi(&spec, &marks, &scheme)?;
    let iterates = iterated_optimal_stopping_all(&spec, &marks, &scheme, 5)?;
    // Near the left edge of the box more impulses are needed, so the sup
    // distance shrinks slowly while v(0, 0) settles after a few iterates.
    for (m, v) in iterates.iter().enumerate() {
        println!(
            "m = {m}: v(0, 0) = {:.6}  sup distance to QVI at t = 0: {:.3e}",
            v.value_at(0, 0.0),
            v.sup_distance(&qvi, 0)
        );
    }
    println!("QVI:   v(0, 0) = {:.6}", qvi.value_at(0, 0.0));
    Ok(())
}
