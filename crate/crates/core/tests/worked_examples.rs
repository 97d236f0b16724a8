//! Small worked instances with known answers, across all solver families.

use jump_bsde::dual::{dual_value_lattice, dual_value_tree};
use jump_bsde::experiment::{compare_solvers, ExperimentPlan, Solver};
use jump_bsde::model::{build_model, discretize_marks, validate_model, Config, Family, Role, Slot};
use jump_bsde::qvi::{
    facelift_terminal, iterated_optimal_stopping_all, residual_check, solve_penalized_ipde,
    solve_qvi, Boundary, FdScheme,
};
use jump_bsde::{
    penalization_sweep, simulate_paths, solve_penalized, CoefficientSpec, Error, MarkMeasureSpec,
    MarkSpace, ModelBuilder, ModelSpec, RegressionBasis, SpaceGrid, TimeGrid,
};

fn unit_mark() -> (MarkMeasureSpec, MarkSpace) {
    let m = MarkMeasureSpec::uniform(0.0, 1.0, 1.0).unwrap();
    let s = discretize_marks(&m, 1).unwrap();
    (m, s)
}

fn builder() -> ModelBuilder {
    ModelBuilder::new(1).marks(unit_mark().0, 1)
}

fn x_affine(slope: f64, intercept: f64) -> CoefficientSpec {
    CoefficientSpec::new(Family::Affine, vec![slope, intercept], Some(vec![Slot::X]))
}

fn martingale() -> ModelSpec {
    builder()
        .diffusion(CoefficientSpec::constant(1.0))
        .terminal(x_affine(1.0, 0.0))
        .build()
        .unwrap()
}

fn ill_posed() -> ModelSpec {
    builder()
        .diffusion(CoefficientSpec::constant(1.0))
        .cost(CoefficientSpec::constant(1.0))
        .build()
        .unwrap()
}

fn heat(cost: f64) -> ModelSpec {
    builder()
        .diffusion(CoefficientSpec::constant(2f64.sqrt()))
        .jump(CoefficientSpec::constant(0.5))
        .cost(CoefficientSpec::constant(cost))
        .terminal(CoefficientSpec::quadratic(1.0, 0.0, 0.0))
        .build()
        .unwrap()
}

fn scheme(spec: &ModelSpec, lo: f64, hi: f64, dx: f64, n_max: f64) -> FdScheme {
    let space = SpaceGrid::new(lo, hi, dx).unwrap();
    FdScheme::with_cfl(spec, &unit_mark().1, space, Boundary::default(), n_max).unwrap()
}

const BASE: &str = "
dim = 1
horizon = 1
x0 = 0
marks.support = 0, 1
marks.mass = 1
marks.count = 1
b.family = constant
b.params = 0
sigma.family = constant
sigma.params = 1
gamma.family = constant
gamma.params = 0
g.family = affine
g.params = 1, 0
f.family = constant
f.params = 0
c.family = constant
c.params = 0
h.family = negate
";

fn config_with(edits: &[(&str, &str)]) -> Config {
    let mut cfg = Config::parse(BASE).unwrap();
    for (k, v) in edits {
        cfg.set(k, *v).unwrap();
    }
    cfg
}

// Model construction and validation.

#[test]
fn degenerate_catalog_config_builds() {
    let spec = build_model(&config_with(&[])).unwrap();
    assert_eq!(spec.dim(), 1);
    assert_eq!(spec.terminal(&[2.5]), 2.5);
    assert!(spec.coefficient(Role::Constraint).is_negation());
}

#[test]
fn negative_horizon_is_refused() {
    let err = build_model(&config_with(&[("horizon", "-1")])).unwrap_err();
    assert!(err.to_string().contains("nonpositive horizon"), "{err}");
}

#[test]
fn scaled_mark_shift_is_mark_bounded() {
    let cfg = config_with(&[("gamma.family", "scaled-mark-shift"), ("gamma.params", "1")]);
    let spec = build_model(&cfg).unwrap();
    assert_eq!(spec.jump1(3.0, 0.7), 0.7);
    let report = validate_model(&spec, 2000, 1);
    let bound = report.get("jump-bound").unwrap();
    assert!(bound.passed);
    assert!(bound.value <= 1.0);
}

#[test]
fn increasing_constraint_fails_with_witness() {
    let cfg = config_with(&[("h.family", "affine"), ("h.params", "1, 0, 0")]);
    let spec = build_model(&cfg).unwrap();
    let report = validate_model(&spec, 500, 2);
    let mono = report.get("constraint-monotone").unwrap();
    assert!(!mono.passed);
    assert!(mono.witness.is_some());
    assert!(!report.all_passed());
}

#[test]
fn midpoint_and_atom_quadrature() {
    let u = discretize_marks(&MarkMeasureSpec::uniform(0.0, 1.0, 2.0).unwrap(), 4).unwrap();
    assert_eq!(u.nodes(), &[0.125, 0.375, 0.625, 0.875]);
    assert_eq!(u.weights(), &[0.5; 4]);
    let a = discretize_marks(&MarkMeasureSpec::atoms(vec![(0.3, 1.0)]).unwrap(), 1).unwrap();
    assert_eq!((a.nodes(), a.weights()), (&[0.3][..], &[1.0][..]));
    assert!(matches!(
        discretize_marks(&MarkMeasureSpec::uniform(0.0, 1.0, 1.0).unwrap(), 0),
        Err(Error::Invalid(_))
    ));
}

// Regression scheme.

#[test]
fn martingale_value_and_shared_coefficients() {
    let spec = martingale();
    let marks = unit_mark().1;
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let bundle = simulate_paths(&spec, &marks, &grid, 10_000, 7).unwrap();
    let basis = RegressionBasis::polynomial(3);
    let sols: Vec<_> = [0.0, 8.0, 64.0]
        .iter()
        .map(|&n| solve_penalized(&spec, &marks, &grid, &bundle, &basis, n).unwrap())
        .collect();
    for s in &sols {
        assert!(s.y0.abs() <= 0.02, "y0 = {}", s.y0);
        assert_eq!(s.max_dk, 0.0);
        for i in 0..grid.steps() {
            assert_eq!(s.y_coefficients(i), sols[0].y_coefficients(i));
            assert_eq!(s.estimate_u(i, &[0.3], 0), 0.0);
        }
        assert_eq!(s.evaluate_y(grid.steps(), &[1.7]).value, 1.7);
    }
}

#[test]
fn ill_posed_regression_values() {
    let spec = ill_posed();
    let marks = unit_mark().1;
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let basis = RegressionBasis::polynomial(3);
    let table = penalization_sweep(
        &spec,
        &marks,
        &grid,
        &basis,
        &[0.0, 1.0, 2.0, 4.0],
        10_000,
        3,
    )
    .unwrap();
    // Without penalty the compensated jump integral has zero mean, so n = 0 gives 0.
    assert_eq!(table.rows[0].y0, 0.0);
    for row in &table.rows[1..] {
        assert!(
            (row.y0 - row.n).abs() <= 0.05 * row.n,
            "n = {}: {}",
            row.n,
            row.y0
        );
    }
    // Common random numbers make the sweep nondecreasing with no slack.
    for w in table.rows.windows(2) {
        assert!(w[1].y0 > w[0].y0);
    }
    assert!(table.is_monotone());
}

#[test]
fn unit_cost_gives_unit_u() {
    let spec = ill_posed();
    let marks = unit_mark().1;
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let bundle = simulate_paths(&spec, &marks, &grid, 2000, 8).unwrap();
    let sol = solve_penalized(
        &spec,
        &marks,
        &grid,
        &bundle,
        &RegressionBasis::polynomial(2),
        2.0,
    )
    .unwrap();
    for i in 0..grid.steps() {
        for x in [-1.0, 0.0, 0.8] {
            assert!((sol.estimate_u(i, &[x], 0) - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn unconstrained_sweep_rows_agree() {
    let spec = martingale();
    let marks = unit_mark().1;
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let table = penalization_sweep(
        &spec,
        &marks,
        &grid,
        &RegressionBasis::polynomial(3),
        &[0.0, 8.0, 64.0],
        10_000,
        4,
    )
    .unwrap();
    let first = &table.rows[0];
    for row in &table.rows {
        assert!((row.y0 - first.y0).abs() <= 3.0 * first.stderr);
    }

    let single = penalization_sweep(
        &spec,
        &marks,
        &grid,
        &RegressionBasis::polynomial(3),
        &[5.0],
        1000,
        4,
    )
    .unwrap();
    assert_eq!(single.rows.len(), 1);
    assert_eq!(single.rows[0].monotone, None);
}

// Finite-difference solvers.

#[test]
fn heat_equation_moment() {
    let spec = heat(-10.0);
    let sch = scheme(&spec, -6.0, 6.0, 0.05, 0.0);
    let v = solve_penalized_ipde(&spec, &unit_mark().1, &sch, 0.0).unwrap();
    let v0 = v.value_at(0, 0.0);
    assert!((v0 - 2.0).abs() <= 0.04, "v0(0) = {v0}");

    let lattice = dual_value_lattice(&spec, &unit_mark().1, &sch, 0.0).unwrap();
    assert_eq!(lattice.values, v.values);
}

#[test]
fn ill_posed_ipde_is_exact() {
    let spec = ill_posed();
    let sch = scheme(&spec, -4.0, 4.0, 0.1, 4.0);
    let v = solve_penalized_ipde(&spec, &unit_mark().1, &sch, 4.0).unwrap();
    for &y in v.layer(0) {
        assert!((y - 4.0).abs() < 1e-12);
    }
}

#[test]
fn inactive_penalty_is_bitwise_silent() {
    let spec = heat(-10.0);
    let marks = unit_mark().1;
    let sch = scheme(&spec, -4.0, 4.0, 0.1, 8.0);
    let base = solve_penalized_ipde(&spec, &marks, &sch, 0.0).unwrap();
    let pen = solve_penalized_ipde(&spec, &marks, &sch, 8.0).unwrap();
    assert_eq!(base.values, pen.values);
}

#[test]
fn prohibitive_cost_leaves_obstacle_slack() {
    let spec = heat(-10.0);
    let marks = unit_mark().1;
    let sch = scheme(&spec, -4.0, 4.0, 0.1, 0.0);
    let linear = solve_penalized_ipde(&spec, &marks, &sch, 0.0).unwrap();
    let qvi = solve_qvi(&spec, &marks, &sch).unwrap();
    for i in 0..=linear.steps() {
        assert!(qvi.sup_distance(&linear, i) <= 1e-12);
    }

    let iterates = iterated_optimal_stopping_all(&spec, &marks, &sch, 3).unwrap();
    assert_eq!(iterates[0].values, linear.values);
    for v in &iterates[1..] {
        assert_eq!(v.values, iterates[0].values);
    }
}

#[test]
fn costly_jumps_are_never_taken() {
    let spec = builder()
        .diffusion(CoefficientSpec::constant(0.5))
        .jump(CoefficientSpec::constant(1.0))
        .cost(CoefficientSpec::constant(-1.0))
        .build()
        .unwrap();
    let marks = unit_mark().1;
    let sch = scheme(&spec, -3.0, 3.0, 0.1, 8.0);
    for grid in [
        solve_qvi(&spec, &marks, &sch).unwrap(),
        solve_penalized_ipde(&spec, &marks, &sch, 8.0).unwrap(),
        dual_value_lattice(&spec, &marks, &sch, 8.0).unwrap(),
    ] {
        assert!(grid.values.iter().flatten().all(|&v| v == 0.0));
    }
    assert_eq!(dual_value_tree(&spec, &marks, 1, 2.0, 0.5).unwrap(), 0.0);
}

#[test]
fn facelift_examples() {
    let marks = unit_mark().1;
    let shifted = |g: CoefficientSpec, c: f64| {
        builder()
            .jump(CoefficientSpec::constant(1.0))
            .cost(CoefficientSpec::constant(c))
            .terminal(g)
            .build()
            .unwrap()
    };

    let zero = shifted(CoefficientSpec::constant(0.0), -0.5);
    let f = facelift_terminal(&zero, &marks, &scheme(&zero, -3.0, 3.0, 0.1, 0.0)).unwrap();
    assert_eq!(f.iterations, 1);
    assert!(f.values.iter().all(|&w| w == 0.0));

    let linear = shifted(x_affine(1.0, 0.0), -2.0);
    let sch = scheme(&linear, -3.0, 3.0, 0.1, 0.0);
    let f = facelift_terminal(&linear, &marks, &sch).unwrap();
    assert_eq!(f.iterations, 1);
    assert_eq!(f.values, sch.space.points());

    let gain = builder()
        .cost(CoefficientSpec::constant(1.0))
        .build()
        .unwrap();
    let sch = scheme(&gain, -1.0, 1.0, 0.1, 0.0);
    assert!(facelift_terminal(&gain, &marks, &sch).is_err());
}

#[test]
fn impulse_qvi_residual_and_facelift_bound() {
    let spec = builder()
        .diffusion(CoefficientSpec::constant(0.3))
        .jump(CoefficientSpec::constant(1.0))
        .cost(CoefficientSpec::constant(-0.1))
        .terminal(CoefficientSpec::positive_part(1.0, 0.0))
        .build()
        .unwrap();
    let marks = unit_mark().1;
    let sch = scheme(&spec, -4.0, 4.0, 0.05, 0.0);
    let v = solve_qvi(&spec, &marks, &sch).unwrap();
    let lift = facelift_terminal(&spec, &marks, &sch).unwrap();
    let j0 = sch.space.nearest(0.0);
    assert!(v.layer(0)[j0] >= lift.values[j0]);

    let report = residual_check(&v, &spec, &marks, &sch);
    assert!(
        report.within_bound(),
        "{} > {}",
        report.max_abs,
        report.bound
    );
    let total = report.pde_fraction + report.obstacle_fraction;
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn iterated_stopping_is_nondecreasing() {
    let spec = heat(-0.2);
    let marks = unit_mark().1;
    let sch = scheme(&spec, -4.0, 4.0, 0.1, 0.0);
    let iterates = iterated_optimal_stopping_all(&spec, &marks, &sch, 3).unwrap();
    for w in iterates.windows(2) {
        for (a, b) in w[0]
            .values
            .iter()
            .flatten()
            .zip(w[1].values.iter().flatten())
        {
            assert!(*b >= a - 1e-12);
        }
    }
}

// Dual oracles.

#[test]
fn one_step_tree_by_hand() {
    // One step of length one: the only decision is nu in {0, 2}, paying c per jump.
    let gain = builder()
        .cost(CoefficientSpec::constant(1.0))
        .build()
        .unwrap();
    let v = dual_value_tree(&gain, &unit_mark().1, 1, 2.0, 1.0).unwrap();
    assert!((v - 2.0).abs() < 1e-12, "{v}");
}

#[test]
fn ipde_and_lattice_dual_share_every_node() {
    let mut cfg = Config::parse(BASE).unwrap();
    for (k, v) in [
        ("gamma.params", "1"),
        ("c.params", "-0.1"),
        ("sigma.params", "0.5"),
        ("g.family", "positive-part"),
        ("solvers", "ipde, lattice-dual"),
        ("n", "1, 4, 16"),
        ("dx", "0.1"),
    ] {
        cfg.set(k, v).unwrap();
    }
    let dir = std::env::temp_dir().join("jump-bsde-worked-gap");
    let plan = ExperimentPlan::from_config(&cfg, &dir).unwrap();
    let table = compare_solvers(&plan).unwrap();
    for n in [1.0, 4.0, 16.0] {
        assert_eq!(table.gap(n, Solver::LatticeDual), Some(0.0));
    }

    cfg.set("solvers", "ipde").unwrap();
    let plan = ExperimentPlan::from_config(&cfg, &dir).unwrap();
    assert!(compare_solvers(&plan).is_err());
}
