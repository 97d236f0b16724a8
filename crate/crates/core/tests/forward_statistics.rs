//! Distributional checks on simulated path bundles.

use jump_bsde::forward::{path_moments, simulate_paths_with, JumpMode};
use jump_bsde::{
    simulate_paths, CoefficientSpec, MarkMeasureSpec, MarkSpace, ModelBuilder, ModelSpec,
    PathBundle, TimeGrid,
};

const M: usize = 100_000;

fn model(mass: f64, sigma: f64, gamma: CoefficientSpec) -> (ModelSpec, MarkSpace) {
    let spec = ModelBuilder::new(1)
        .marks(MarkMeasureSpec::uniform(0.0, 1.0, mass).unwrap(), 4)
        .diffusion(CoefficientSpec::constant(sigma))
        .jump(gamma)
        .build()
        .unwrap();
    let marks = spec.mark_space().unwrap();
    (spec, marks)
}

fn counts(bundle: &PathBundle) -> Vec<usize> {
    (0..bundle.paths()).map(|p| bundle.jump_count(p)).collect()
}

#[test]
fn poisson_mean_in_band() {
    let (spec, marks) = model(2.0, 0.0, CoefficientSpec::constant(0.0));
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let bundle = simulate_paths(&spec, &marks, &grid, M, 11).unwrap();
    let mean = counts(&bundle).iter().sum::<usize>() as f64 / M as f64;
    assert!((1.97..=2.03).contains(&mean), "mean jump count {mean}");
}

#[test]
fn jump_counts_pass_chi_square() {
    let (spec, marks) = model(2.0, 0.0, CoefficientSpec::constant(0.0));
    let grid = TimeGrid::new(1.0, 25).unwrap();
    let bundle = simulate_paths(&spec, &marks, &grid, M, 12).unwrap();

    // Cells 0..=8 and a pooled tail {9, 10, ...}; every expected count exceeds 5.
    let cells = 10;
    let mut observed = vec![0usize; cells];
    for c in counts(&bundle) {
        observed[c.min(cells - 1)] += 1;
    }
    let lambda: f64 = 2.0;
    let mut probs = Vec::with_capacity(cells);
    let mut pk = (-lambda).exp();
    for k in 0..cells - 1 {
        probs.push(pk);
        pk *= lambda / (k + 1) as f64;
    }
    probs.push(1.0 - probs.iter().sum::<f64>());

    let stat: f64 = observed
        .iter()
        .zip(&probs)
        .map(|(&o, &p)| {
            let e = p * M as f64;
            assert!(e > 5.0);
            (o as f64 - e).powi(2) / e
        })
        .sum();
    // Upper 0.001 quantile of chi-square with 9 degrees of freedom.
    let critical = 27.877;
    assert!(stat < critical, "chi-square {stat:.3} >= {critical}");
}

#[test]
fn brownian_terminal_variance() {
    let (spec, marks) = model(1.0, 1.0, CoefficientSpec::constant(0.0));
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let bundle = simulate_paths(&spec, &marks, &grid, M, 13).unwrap();
    let report = path_moments(&bundle);
    // Var(X_T^2) = 2, so the standard error is about 0.0045.
    let second = report.second_moments[grid.steps()];
    assert!((second - 1.0).abs() < 0.02, "E|X_T|^2 = {second}");
    assert!(report.mean_sup_square >= second);
}

#[test]
fn compound_poisson_mean() {
    let (spec, marks) = model(1.0, 0.0, CoefficientSpec::constant(1.0));
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let bundle = simulate_paths(&spec, &marks, &grid, M, 14).unwrap();
    let report = path_moments(&bundle);
    // X_T is Poisson(1): standard error 1/sqrt(M).
    let mean = report.means[grid.steps()][0];
    assert!(
        (mean - 1.0).abs() < 4.0 / (M as f64).sqrt(),
        "E[X_T] = {mean}"
    );
    for p in 0..1000 {
        assert_eq!(
            bundle.state(p, grid.steps())[0],
            bundle.jump_count(p) as f64
        );
    }
}

#[test]
fn suppressed_jumps_match_null_jump_size() {
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let (null, marks) = model(3.0, 0.7, CoefficientSpec::constant(0.0));
    let (shifted, _) = model(3.0, 0.7, CoefficientSpec::scaled_mark_shift(1.0));

    let applied_null = simulate_paths_with(&null, &marks, &grid, 2000, 5, JumpMode::Apply).unwrap();
    let suppressed =
        simulate_paths_with(&shifted, &marks, &grid, 2000, 5, JumpMode::Suppress).unwrap();
    let applied = simulate_paths_with(&shifted, &marks, &grid, 2000, 5, JumpMode::Apply).unwrap();

    assert_eq!(applied_null.states_at_all(), suppressed.states_at_all());
    for p in 0..2000 {
        for i in 0..grid.steps() {
            assert_eq!(suppressed.jumps(p, i), applied.jumps(p, i));
            assert_eq!(suppressed.increment(p, i), applied.increment(p, i));
        }
    }
    assert_ne!(applied.states_at_all(), suppressed.states_at_all());
}

#[test]
fn bundle_independent_of_thread_count() {
    let (spec, marks) = model(2.0, 0.5, CoefficientSpec::scaled_mark_shift(0.5));
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_paths(&spec, &marks, &grid, 20_000, 99).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn different_seeds_differ() {
    let (spec, marks) = model(2.0, 1.0, CoefficientSpec::constant(0.0));
    let grid = TimeGrid::new(1.0, 5).unwrap();
    let a = simulate_paths(&spec, &marks, &grid, 100, 1).unwrap();
    let b = simulate_paths(&spec, &marks, &grid, 100, 2).unwrap();
    assert_ne!(a.states_at_all(), b.states_at_all());
}
