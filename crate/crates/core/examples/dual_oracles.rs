//! Optimal jump-intensity control three ways: exhaustive enumeration on a
//! small tree, backward induction on the same tree, and the lattice dual.

use jump_bsde::dual::{
    dual_value_lattice, dual_value_tree, dual_value_tree_dp, dual_value_tree_levels,
};
use jump_bsde::qvi::{solve_penalized_ipde, Boundary, FdScheme};
use jump_bsde::{CoefficientSpec, MarkMeasureSpec, ModelBuilder, SpaceGrid, TimeGrid};

fn main() -> jump_bsde::Result<()> {
    let spec = ModelBuilder::new(1)
        .horizon(0.75)
        .drift(CoefficientSpec::constant(0.2))
        .diffusion(CoefficientSpec::constant(0.5))
        .jump(CoefficientSpec::constant(1.0))
        .cost(CoefficientSpec::constant(-0.1))
        .terminal(CoefficientSpec::positive_part(1.0, 0.0))
        .marks(MarkMeasureSpec::atoms(vec![(1.0, 1.0)])?, 1)
        .build()?;
    let marks = spec.mark_space()?;
    let (dx, n) = (1.0, 1.0);

    for depth in 1..=4 {
        let exhaustive = dual_value_tree(&spec, &marks, depth, n, dx)?;
        let dp = dual_value_tree_dp(&spec, &marks, depth, n, dx)?;
        println!("depth {depth}: enumeration {exhaustive:.12}  DP {dp:.12}");
        // Bang-bang controls suffice: adding an interior level changes nothing.
        if depth <= 3 {
            let three = dual_value_tree_levels(&spec, &marks, depth, &[0.0, n / 2.0, n], dx)?;
            println!("         with a middle level {three:.12}");
        }

        let space = SpaceGrid::new(-(depth as f64 + 2.0), depth as f64 + 2.0, dx)?;
        let scheme = FdScheme::new(
            space,
            TimeGrid::new(spec.horizon(), depth)?,
            Boundary::default(),
        );
        if scheme.check_cfl(&spec, &marks, n).is_ok() {
            let lattice = dual_value_lattice(&spec, &marks, &scheme, n)?;
            let ipde = solve_penalized_ipde(&spec, &marks, &scheme, n)?;
            println!(
                "         lattice {:.12}  ipde {:.12}",
                lattice.value_at(0, 0.0),
                ipde.value_at(0, 0.0)
            );
        } else {
            println!("         lattice skipped: explicit step violates CFL at this spacing");
        }
    }
    Ok(())
}
