//! Backward regression Monte Carlo scheme for the penalized BSDE
//!
//! ```text
//! Y^n_t = g(X_T) + ∫ f(X, Y^n, Z^n) ds + n ∫∫ h^-(U^n(e), e) λ(de) ds
//!         - ∫ Z^n dW - ∫∫ (U^n(e) - c(X, Y^n, Z^n, e)) μ(ds, de).
//! ```
//!
//! One explicit step from `t_{i+1}` to `t_i`:
//!
//! * `z_i` regresses `y_{i+1}(X_{i+1}) ΔW_i / Δt` on `X_i`;
//! * `u_i(x, e_k) = y_{i+1}(x + γ(x, e_k)) - y_{i+1}(x) + c(x, y_{i+1}(x), z_i(x), e_k)`;
//! * `y_i` regresses
//!   `y_{i+1}(X_{i+1}) + Δt f + n Δt Σ λ_k h^-(u_k) - Δt Σ λ_k (u_k - c_k)`,
//!   the last term being the compensator of the jump integral;
//! * `ΔK_i(x) = n Δt Σ λ_k h^-(u_i(x, e_k))`.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{simulate_paths, PathBundle, TimeGrid};
use crate::model::{MarkSpace, ModelSpec};
use crate::regression::{empirical_domain, BasisFamily, FittedFunction, RegressionBasis};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YEvaluation {
    pub value: f64,
    /// `x` was outside the basis domain box and the value was extrapolated.
    pub extrapolated: bool,
}

#[derive(Debug, Clone)]
pub struct PenalizedSolution {
    pub n: f64,
    spec: ModelSpec,
    marks: MarkSpace,
    grid: TimeGrid,
    domain: Vec<(f64, f64)>,
    y_fits: Vec<FittedFunction>,
    z_fits: Vec<Option<Vec<FittedFunction>>>,
    /// RMS regression residual of the `y` fit per step.
    pub residuals: Vec<f64>,
    /// `Y^n_0(x0)`
    pub y0: f64,
    /// Monte Carlo standard error of `y0`.
    pub y0_stderr: f64,
    /// Largest `ΔK_i(X_i)` over all paths and steps.
    pub max_dk: f64,
    /// Evaluations of a fitted function outside its domain box.
    pub extrapolations: usize,
}

impl PenalizedSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    /// `y_i(x)`; exactly `g(x)` at `i = N`.
    pub fn evaluate_y(&self, i: usize, x: &[f64]) -> YEvaluation {
        assert!(i <= self.grid.steps(), "time index {i} out of range");
        if i == self.grid.steps() {
            return YEvaluation {
                value: self.spec.terminal(x),
                extrapolated: false,
            };
        }
        let (value, extrapolated) = self.y_fits[i].evaluate(x);
        YEvaluation {
            value,
            extrapolated,
        }
    }

    /// Regression coefficients of `y_i`, `i < N`.
    pub fn y_coefficients(&self, i: usize) -> &[f64] {
        self.y_fits[i].coefficients()
    }

    pub fn estimate_z(&self, i: usize, x: &[f64]) -> Vec<f64> {
        match &self.z_fits[i] {
            Some(fs) => fs.iter().map(|f| f.value(x)).collect(),
            None => vec![0.0; self.spec.dim()],
        }
    }

    /// `u_i(x, e_k)` as in the scheme's jump identification.
    pub fn estimate_u(&self, i: usize, x: &[f64], k: usize) -> f64 {
        assert!(i < self.grid.steps(), "U is defined for i < N");
        let z = self.estimate_z(i, x);
        let y_here = self.evaluate_y(i + 1, x).value;
        let e = self.marks.nodes()[k];
        let mut shifted = vec![0.0; x.len()];
        self.spec.jump(x, e, &mut shifted);
        for (s, xi) in shifted.iter_mut().zip(x) {
            *s += xi;
        }
        self.evaluate_y(i + 1, &shifted).value - y_here + self.spec.cost(x, y_here, &z, e)
    }

    /// `ΔK_i(x) = n Δt Σ λ_k h^-(u_i(x, e_k), e_k)`.
    pub fn delta_k(&self, i: usize, x: &[f64]) -> f64 {
        let pen: f64 = (0..self.marks.len())
            .map(|k| {
                self.marks.weights()[k]
                    * self
                        .spec
                        .constraint_negative_part(self.estimate_u(i, x, k), self.marks.nodes()[k])
            })
            .sum();
        self.n * self.grid.dt() * pen
    }
}

struct StepTarget {
    target: f64,
    dk: f64,
    outside: usize,
}

/// Solves the penalized BSDE at level `n` on a simulated bundle.
pub fn solve_penalized(
    spec: &ModelSpec,
    marks: &MarkSpace,
    grid: &TimeGrid,
    bundle: &PathBundle,
    basis: &RegressionBasis,
    n: f64,
) -> Result<PenalizedSolution> {
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::Invalid(format!("penalization level {n}")));
    }
    let (m, steps, d) = (bundle.paths(), grid.steps(), spec.dim());
    if bundle.steps() != steps || bundle.dim() != d {
        return Err(Error::Invalid(
            "path bundle does not match the time grid or model dimension".into(),
        ));
    }
    if matches!(basis.family, BasisFamily::Polynomial { .. }) && m <= basis.span_dim(d) {
        return Err(Error::Invalid(format!(
            "{m} paths do not exceed the basis dimension {}",
            basis.span_dim(d)
        )));
    }
    let domain = match &basis.domain {
        Some(dom) if dom.len() == d => dom.clone(),
        Some(_) => return Err(Error::Invalid("basis domain has wrong dimension".into())),
        None => empirical_domain(bundle.states_at_all(), d),
    };

    let dt = grid.dt();
    let weights = marks.weights();
    let nodes = marks.nodes();
    let no_diffusion = spec.diffusion_is_zero();

    let mut y_fits: Vec<Option<FittedFunction>> = vec![None; steps];
    let mut z_fits: Vec<Option<Vec<FittedFunction>>> = vec![None; steps];
    let mut residuals = vec![0.0; steps];
    let mut max_dk = 0.0f64;
    let mut extrapolations = 0usize;
    // Telescoped per-path estimator of y0: g(X_N) plus every step's
    // driver increment. Its sample mean is y0 when the basis spans
    // constants, so its spread gives the Monte Carlo error of y0.
    let mut pathwise: Vec<f64> = (0..m)
        .map(|p| spec.terminal(bundle.state(p, steps)))
        .collect();

    for i in (0..steps).rev() {
        let next: Option<&FittedFunction> = if i + 1 == steps {
            None
        } else {
            y_fits[i + 1].as_ref()
        };
        let y_next = |x: &[f64]| -> (f64, bool) {
            match next {
                None => (spec.terminal(x), false),
                Some(f) => f.evaluate(x),
            }
        };
        let xs = bundle.states_at(i);

        let y_at_next: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|p| y_next(bundle.state(p, i + 1)).0)
            .collect();

        let z_fit = if no_diffusion {
            None
        } else {
            let mut fits = Vec::with_capacity(d);
            for j in 0..d {
                let targets: Vec<f64> = (0..m)
                    .map(|p| y_at_next[p] * bundle.increment(p, i)[j] / dt)
                    .collect();
                fits.push(basis.fit(&domain, &xs, &targets, i)?);
            }
            Some(fits)
        };

        let per_path: Vec<StepTarget> = (0..m)
            .into_par_iter()
            .map(|p| {
                let x = bundle.state(p, i);
                let mut outside = 0;
                let (y_here, o) = y_next(x);
                outside += o as usize;
                let z: Vec<f64> = match &z_fit {
                    Some(fs) => fs.iter().map(|f| f.value(x)).collect(),
                    None => vec![0.0; d],
                };
                let f = spec.generator(x, y_here, &z);
                let mut shift = vec![0.0; d];
                let mut shifted = vec![0.0; d];
                let mut pen = 0.0;
                let mut comp = 0.0;
                for (&e, &w) in nodes.iter().zip(weights) {
                    spec.jump(x, e, &mut shift);
                    for j in 0..d {
                        shifted[j] = x[j] + shift[j];
                    }
                    let (y_shift, o) = y_next(&shifted);
                    outside += o as usize;
                    let c = spec.cost(x, y_here, &z, e);
                    let u = y_shift - y_here + c;
                    pen += w * spec.constraint_negative_part(u, e);
                    comp += w * (u - c);
                }
                let dk = n * dt * pen;
                StepTarget {
                    target: y_at_next[p] + dt * f + dk - dt * comp,
                    dk,
                    outside,
                }
            })
            .collect();

        let mut targets = Vec::with_capacity(m);
        for (p, t) in per_path.iter().enumerate() {
            pathwise[p] += t.target - y_at_next[p];
            if !t.target.is_finite() {
                return Err(Error::Blowup {
                    step: i,
                    what: "regression target",
                });
            }
            max_dk = max_dk.max(t.dk);
            extrapolations += t.outside;
            targets.push(t.target);
        }
        let fit = basis.fit(&domain, &xs, &targets, i)?;
        if !fit.is_finite() {
            return Err(Error::Blowup {
                step: i,
                what: "regression coefficient",
            });
        }
        residuals[i] = fit.residual_rms();
        y_fits[i] = Some(fit);
        z_fits[i] = z_fit;
    }

    let y_fits: Vec<FittedFunction> = y_fits.into_iter().map(|f| f.expect("fitted")).collect();
    let y0 = y_fits[0].value(spec.x0());
    let mean = pathwise.iter().sum::<f64>() / m as f64;
    let var = pathwise.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0).max(1.0);
    let y0_stderr = (var / m as f64).sqrt();
    Ok(PenalizedSolution {
        n,
        spec: spec.clone(),
        marks: marks.clone(),
        grid: *grid,
        domain,
        y_fits,
        z_fits,
        residuals,
        y0,
        y0_stderr,
        max_dk,
        extrapolations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: f64,
    pub y0: f64,
    pub stderr: f64,
    /// `None` for the first row; `Some(false)` when `y0` drops by more than
    /// three standard errors below the previous row.
    pub monotone: Option<bool>,
    pub max_dk: f64,
    pub runtime_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// No row flags a monotonicity violation and no row failed.
    pub fn is_monotone(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.error.is_none() && r.monotone != Some(false))
    }

    /// `n, y0, stderr, monotone_flag, max_dK, runtime_ms`
    pub fn write_csv<W: Write>(&self, mut w: W, with_runtime: bool) -> Result<()> {
        writeln!(w, "n,y0,stderr,monotone_flag,max_dK,runtime_ms")?;
        for r in &self.rows {
            let flag = match (&r.error, r.monotone) {
                (Some(_), _) => "error",
                (None, None) => "",
                (None, Some(true)) => "ok",
                (None, Some(false)) => "violation",
            };
            let runtime = if with_runtime {
                format!("{:.3}", r.runtime_ms)
            } else {
                String::new()
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.n, r.y0, r.stderr, flag, r.max_dk, runtime
            )?;
        }
        Ok(())
    }
}

/// Solves for every level in `n_list` on one shared bundle (common random
/// numbers). Rows are sorted by `n`.
pub fn penalization_sweep(
    spec: &ModelSpec,
    marks: &MarkSpace,
    grid: &TimeGrid,
    basis: &RegressionBasis,
    n_list: &[f64],
    m: usize,
    seed: u64,
) -> Result<SweepTable> {
    if n_list.is_empty() {
        return Err(Error::Invalid("empty penalization schedule".into()));
    }
    let bundle = simulate_paths(spec, marks, grid, m, seed)?;
    let mut levels = n_list.to_vec();
    levels.sort_by(f64::total_cmp);
    let mut rows: Vec<SweepRow> = Vec::with_capacity(levels.len());
    for n in levels {
        let start = Instant::now();
        let res = solve_penalized(spec, marks, grid, &bundle, basis, n);
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        let row = match res {
            Ok(sol) => {
                let monotone = rows.last().and_then(|prev| {
                    prev.error.is_none().then(|| {
                        let tol = 3.0 * prev.stderr.max(sol.y0_stderr);
                        sol.y0 >= prev.y0 - tol
                    })
                });
                SweepRow {
                    n,
                    y0: sol.y0,
                    stderr: sol.y0_stderr,
                    monotone,
                    max_dk: sol.max_dk,
                    runtime_ms,
                    error: None,
                }
            }
            Err(e) => SweepRow {
                n,
                y0: f64::NAN,
                stderr: f64::NAN,
                monotone: None,
                max_dk: f64::NAN,
                runtime_ms,
                error: Some(format!("n = {n}: {e}")),
            },
        };
        rows.push(row);
    }
    Ok(SweepTable { rows })
}
