//! Explicit monotone finite differences in one space dimension: the
//! penalized integro-PDE, the limiting quasi-variational inequality with its
//! face-lifted terminal condition, and iterated optimal stopping.
//!
//! The local operator uses the central second difference and upwind first
//! differences. The nonlocal operator
//! `H^e v(x) = v(x + γ(x, e)) + c(x, v(x), σ(x) Dv(x), e)` interpolates
//! linearly inside the box and is constant outside it.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::TimeGrid;
use crate::grid::{SpaceGrid, ValueGrid};
use crate::model::{MarkSpace, ModelSpec};

const PROJECTION_TOL: f64 = 1e-10;
const PROJECTION_SWEEPS: usize = 100;
const FACELIFT_TOL: f64 = 1e-10;
const FACELIFT_ITERATIONS: usize = 1000;
/// Slack on the CFL ratio for grids chosen to hit it exactly.
const CFL_SLACK: f64 = 1e-9;

/// Treatment of the two end nodes of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// End nodes keep their terminal values for all times.
    DirichletFromTerminal,
    /// Linear extrapolation of the ghost node, so the second difference
    /// vanishes; drift only uses the inward neighbour when it points inward.
    #[default]
    OneSidedExtrapolation,
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" | "dirichlet-from-terminal" => Ok(Boundary::DirichletFromTerminal),
            "extrapolate" | "one-sided-extrapolation" => Ok(Boundary::OneSidedExtrapolation),
            other => Err(Error::Invalid(format!(
                "unknown boundary treatment `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdScheme {
    pub space: SpaceGrid,
    pub time: TimeGrid,
    pub boundary: Boundary,
}

impl FdScheme {
    pub fn new(space: SpaceGrid, time: TimeGrid, boundary: Boundary) -> Self {
        FdScheme {
            space,
            time,
            boundary,
        }
    }

    /// Fewest time steps over the model horizon meeting the CFL bound at
    /// level `n_max`.
    pub fn with_cfl(
        spec: &ModelSpec,
        marks: &MarkSpace,
        space: SpaceGrid,
        boundary: Boundary,
        n_max: f64,
    ) -> Result<Self> {
        let rate = cfl_rate(spec, marks, &space, n_max);
        let steps = ((spec.horizon() * rate) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(FdScheme::new(
            space,
            TimeGrid::new(spec.horizon(), steps)?,
            boundary,
        ))
    }

    /// `Δt (σ²/Δx² + |b|/Δx + λ(E)(1 + n k_h))`; the scheme is monotone when
    /// this is at most 1.
    pub fn cfl_ratio(&self, spec: &ModelSpec, marks: &MarkSpace, n: f64) -> f64 {
        self.time.dt() * cfl_rate(spec, marks, &self.space, n)
    }

    pub fn check_cfl(&self, spec: &ModelSpec, marks: &MarkSpace, n: f64) -> Result<()> {
        let ratio = self.cfl_ratio(spec, marks, n);
        if ratio > 1.0 + CFL_SLACK {
            return Err(Error::Cfl { ratio });
        }
        Ok(())
    }

    fn check_horizon(&self, spec: &ModelSpec) -> Result<()> {
        if (self.time.horizon() - spec.horizon()).abs() > 1e-12 * spec.horizon() {
            return Err(Error::Invalid(format!(
                "time grid horizon {} differs from the model horizon {}",
                self.time.horizon(),
                spec.horizon()
            )));
        }
        Ok(())
    }
}

/// Largest `σ²` and `|b|` over the grid nodes.
pub(crate) fn local_maxima(spec: &ModelSpec, space: &SpaceGrid) -> (f64, f64) {
    space.points().iter().fold((0.0f64, 0.0f64), |(s, b), &x| {
        (
            s.max(spec.diffusion1(x).powi(2)),
            b.max(spec.drift1(x).abs()),
        )
    })
}

fn cfl_rate(spec: &ModelSpec, marks: &MarkSpace, space: &SpaceGrid, n: f64) -> f64 {
    let (s2, b) = local_maxima(spec, space);
    let dx = space.dx();
    s2 / (dx * dx) + b / dx + marks.total_mass() * (1.0 + n * spec.constraint_lipschitz())
}

/// Central differences inside, one-sided at the two end nodes.
pub fn central_gradient(v: &[f64], space: &SpaceGrid) -> Vec<f64> {
    let last = v.len() - 1;
    let dx = space.dx();
    (0..v.len())
        .map(|j| match j {
            0 => (v[1] - v[0]) / dx,
            j if j == last => (v[last] - v[last - 1]) / dx,
            j => (v[j + 1] - v[j - 1]) / (2.0 * dx),
        })
        .collect()
}

/// Grid-frozen coefficients shared by every layer update.
pub(crate) struct Stencil<'a> {
    spec: &'a ModelSpec,
    marks: &'a MarkSpace,
    space: SpaceGrid,
    boundary: Boundary,
    xs: Vec<f64>,
    sigma: Vec<f64>,
    drift: Vec<f64>,
    /// `x_j + γ(x_j, e_k)`, `[k][j]`.
    targets: Vec<Vec<f64>>,
}

impl<'a> Stencil<'a> {
    pub(crate) fn new(
        spec: &'a ModelSpec,
        marks: &'a MarkSpace,
        space: SpaceGrid,
        boundary: Boundary,
    ) -> Self {
        let xs = space.points();
        let sigma = xs.iter().map(|&x| spec.diffusion1(x)).collect();
        let drift = xs.iter().map(|&x| spec.drift1(x)).collect();
        let targets = marks
            .nodes()
            .iter()
            .map(|&e| xs.iter().map(|&x| x + spec.jump1(x, e)).collect())
            .collect();
        Stencil {
            spec,
            marks,
            space,
            boundary,
            xs,
            sigma,
            drift,
            targets,
        }
    }

    fn len(&self) -> usize {
        self.xs.len()
    }

    /// `L_h v` at node `j`.
    fn local(&self, v: &[f64], j: usize) -> f64 {
        let dx = self.space.dx();
        let last = self.len() - 1;
        let b = self.drift[j];
        let up = b.max(0.0);
        let down = (-b).max(0.0);
        if j == 0 {
            return up * (v[1] - v[0]) / dx;
        }
        if j == last {
            return -down * (v[last] - v[last - 1]) / dx;
        }
        let s = self.sigma[j];
        0.5 * s * s * (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (dx * dx) + up * (v[j + 1] - v[j]) / dx
            - down * (v[j] - v[j - 1]) / dx
    }

    /// `H^{e_k} v(x_j)` given the gradient proxy at `x_j`.
    fn nonlocal(&self, v: &[f64], grad: f64, j: usize, k: usize) -> f64 {
        let x = self.xs[j];
        let z = self.sigma[j] * grad;
        self.space.interpolate(v, self.targets[k][j])
            + self.spec.cost(&[x], v[j], &[z], self.marks.nodes()[k])
    }

    /// `max_k H^{e_k} v` at every node.
    pub(crate) fn obstacle(&self, v: &[f64]) -> Vec<f64> {
        let grad = central_gradient(v, &self.space);
        (0..self.len())
            .into_par_iter()
            .map(|j| {
                (0..self.marks.len())
                    .map(|k| self.nonlocal(v, grad[j], j, k))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// One explicit backward step from `v = v_{i+1}`:
    /// `v + Δt L_h v + Δt f + Δt Σ_k λ_k jump(u_k, e_k)` with
    /// `u_k = H^{e_k} v - v`. End nodes under Dirichlet treatment take
    /// `terminal`.
    pub(crate) fn step<J>(&self, v: &[f64], dt: f64, terminal: &[f64], jump: J) -> Vec<f64>
    where
        J: Fn(f64, f64) -> f64 + Sync,
    {
        let grad = central_gradient(v, &self.space);
        let last = self.len() - 1;
        let nodes = self.marks.nodes();
        let weights = self.marks.weights();
        (0..self.len())
            .into_par_iter()
            .map(|j| {
                if self.boundary == Boundary::DirichletFromTerminal && (j == 0 || j == last) {
                    return terminal[j];
                }
                let x = self.xs[j];
                let diffused = v[j] + dt * self.local(v, j);
                let f = self.spec.generator(&[x], v[j], &[self.sigma[j] * grad[j]]);
                let mut jumps = 0.0;
                for k in 0..nodes.len() {
                    let u = self.nonlocal(v, grad[j], j, k) - v[j];
                    jumps += weights[k] * jump(u, nodes[k]);
                }
                diffused + dt * f + dt * jumps
            })
            .collect()
    }
}

fn require_one_dim(spec: &ModelSpec, what: &'static str) -> Result<()> {
    if spec.dim() != 1 {
        return Err(Error::NotOneDimensional(what));
    }
    Ok(())
}

pub(crate) fn check_finite(layer: &[f64], step: usize, what: &'static str) -> Result<()> {
    if layer.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Blowup { step, what })
    }
}

pub(crate) fn terminal_layer(spec: &ModelSpec, space: &SpaceGrid) -> Vec<f64> {
    space
        .points()
        .iter()
        .map(|&x| spec.terminal(&[x]))
        .collect()
}

/// `H^{e_k} v` for every mark node, `[k][j]`, with `gradient` as the
/// `Dv` proxy (see [`central_gradient`]).
pub fn apply_nonlocal(
    v: &[f64],
    spec: &ModelSpec,
    marks: &MarkSpace,
    space: &SpaceGrid,
    gradient: &[f64],
) -> Vec<Vec<f64>> {
    let st = Stencil::new(spec, marks, *space, Boundary::default());
    (0..marks.len())
        .map(|k| {
            (0..v.len())
                .map(|j| st.nonlocal(v, gradient[j], j, k))
                .collect()
        })
        .collect()
}

/// Penalized integro-PDE at level `n`, explicit in the nonlocal term.
pub fn solve_penalized_ipde(
    spec: &ModelSpec,
    marks: &MarkSpace,
    scheme: &FdScheme,
    n: f64,
) -> Result<ValueGrid> {
    require_one_dim(spec, "finite-difference solver")?;
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::Invalid(format!("penalization level {n}")));
    }
    scheme.check_horizon(spec)?;
    scheme.check_cfl(spec, marks, n)?;
    let st = Stencil::new(spec, marks, scheme.space, scheme.boundary);
    let terminal = terminal_layer(spec, &scheme.space);
    let penalty = |u: f64, e: f64| n * spec.constraint_negative_part(u, e);
    march(scheme, terminal, "penalized PDE layer", |v, t| {
        st.step(v, scheme.time.dt(), t, penalty)
    })
}

/// Runs a backward recursion `v_i = update(v_{i+1}, v_N)` from `terminal`.
pub(crate) fn march<F>(
    scheme: &FdScheme,
    terminal: Vec<f64>,
    what: &'static str,
    update: F,
) -> Result<ValueGrid>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let steps = scheme.time.steps();
    check_finite(&terminal, steps, what)?;
    let mut values = vec![Vec::new(); steps + 1];
    values[steps] = terminal;
    for i in (0..steps).rev() {
        let layer = update(&values[i + 1], &values[steps]);
        check_finite(&layer, i, what)?;
        values[i] = layer;
    }
    Ok(ValueGrid {
        space: scheme.space,
        times: scheme.time.times(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facelift {
    pub values: Vec<f64>,
    pub iterations: usize,
}

/// Face-lifted terminal condition `w = max(g, H w)` by fixed-point
/// iteration from `g`.
pub fn facelift_terminal(
    spec: &ModelSpec,
    marks: &MarkSpace,
    scheme: &FdScheme,
) -> Result<Facelift> {
    require_one_dim(spec, "face-lift")?;
    if !spec.has_obstacle_form() {
        return Err(Error::NotObstacleForm("face-lift"));
    }
    let st = Stencil::new(spec, marks, scheme.space, scheme.boundary);
    let g = terminal_layer(spec, &scheme.space);
    let mut w = g.clone();
    for it in 1..=FACELIFT_ITERATIONS {
        let next: Vec<f64> = st
            .obstacle(&w)
            .iter()
            .zip(&g)
            .map(|(h, g)| g.max(*h))
            .collect();
        let change = sup_change(&w, &next);
        w = next;
        if !change.is_finite() {
            break;
        }
        if change < FACELIFT_TOL {
            return Ok(Facelift {
                values: w,
                iterations: it,
            });
        }
    }
    Err(Error::FaceliftDiverged(FACELIFT_ITERATIONS))
}

fn sup_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Quasi-variational inequality: PDE step, then the projection
/// `v = max(v_pde, H v)` iterated to a fixed point on each layer.
pub fn solve_qvi(spec: &ModelSpec, marks: &MarkSpace, scheme: &FdScheme) -> Result<ValueGrid> {
    require_one_dim(spec, "QVI solver")?;
    if !spec.has_obstacle_form() {
        return Err(Error::NotObstacleForm("QVI solver"));
    }
    scheme.check_horizon(spec)?;
    scheme.check_cfl(spec, marks, 0.0)?;
    let st = Stencil::new(spec, marks, scheme.space, scheme.boundary);
    let terminal = facelift_terminal(spec, marks, scheme)?.values;
    let dt = scheme.time.dt();
    let last = st.len() - 1;
    let steps = scheme.time.steps();
    let mut values = vec![Vec::new(); steps + 1];
    values[steps] = terminal;
    for i in (0..steps).rev() {
        let pde = st.step(&values[i + 1], dt, &values[steps], |_, _| 0.0);
        check_finite(&pde, i, "QVI layer")?;
        let mut w = pde.clone();
        let mut converged = false;
        for _ in 0..PROJECTION_SWEEPS {
            let h = st.obstacle(&w);
            let next: Vec<f64> = (0..=last)
                .map(|j| {
                    if scheme.boundary == Boundary::DirichletFromTerminal && (j == 0 || j == last) {
                        pde[j]
                    } else {
                        pde[j].max(h[j])
                    }
                })
                .collect();
            let change = sup_change(&w, &next);
            w = next;
            if change < PROJECTION_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::ProjectionDiverged {
                layer: i,
                sweeps: PROJECTION_SWEEPS,
            });
        }
        check_finite(&w, i, "QVI layer")?;
        values[i] = w;
    }
    Ok(ValueGrid {
        space: scheme.space,
        times: scheme.time.times(),
        values,
    })
}

/// Iterates `v^(0), ..., v^(max_impulses)`; `v^(0)` is the linear PDE
/// solution and `v^(m+1)` the optimal-stopping value with obstacle
/// `H v^(m)`.
pub fn iterated_optimal_stopping_all(
    spec: &ModelSpec,
    marks: &MarkSpace,
    scheme: &FdScheme,
    max_impulses: usize,
) -> Result<Vec<ValueGrid>> {
    require_one_dim(spec, "iterated optimal stopping")?;
    if !spec.is_impulse_shape() {
        return Err(Error::NotImpulseShape("iterated optimal stopping"));
    }
    let mut out = vec![solve_penalized_ipde(spec, marks, scheme, 0.0)?];
    let st = Stencil::new(spec, marks, scheme.space, scheme.boundary);
    let g = terminal_layer(spec, &scheme.space);
    let dt = scheme.time.dt();
    let steps = scheme.time.steps();
    for _ in 0..max_impulses {
        let prev = out.last().expect("nonempty");
        let obstacles: Vec<Vec<f64>> = prev.values.iter().map(|v| st.obstacle(v)).collect();
        let terminal: Vec<f64> = g
            .iter()
            .zip(&obstacles[steps])
            .map(|(g, h)| g.max(*h))
            .collect();
        let mut values = vec![Vec::new(); steps + 1];
        values[steps] = terminal;
        for i in (0..steps).rev() {
            let pde = st.step(&values[i + 1], dt, &values[steps], |_, _| 0.0);
            let layer: Vec<f64> = pde
                .iter()
                .zip(&obstacles[i])
                .enumerate()
                .map(|(j, (p, h))| {
                    if scheme.boundary == Boundary::DirichletFromTerminal
                        && (j == 0 || j + 1 == pde.len())
                    {
                        *p
                    } else {
                        p.max(*h)
                    }
                })
                .collect();
            check_finite(&layer, i, "optimal stopping layer")?;
            values[i] = layer;
        }
        out.push(ValueGrid {
            space: scheme.space,
            times: scheme.time.times(),
            values,
        });
    }
    Ok(out)
}

/// The last iterate of [`iterated_optimal_stopping_all`].
pub fn iterated_optimal_stopping(
    spec: &ModelSpec,
    marks: &MarkSpace,
    scheme: &FdScheme,
    max_impulses: usize,
) -> Result<ValueGrid> {
    Ok(
        iterated_optimal_stopping_all(spec, marks, scheme, max_impulses)?
            .pop()
            .expect("nonempty"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `-∂t v - L v - f`
    Pde,
    /// `min_k h(H^{e_k} v - v, e_k)`
    Obstacle,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Pde => "pde",
            Branch::Obstacle => "obstacle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub i: usize,
    pub j: usize,
    pub t: f64,
    pub x: f64,
    pub residual: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub rows: Vec<ResidualRow>,
    pub max_abs: f64,
    /// `(i, j)` of the largest `|residual|`.
    pub worst: Option<(usize, usize)>,
    pub pde_fraction: f64,
    pub obstacle_fraction: f64,
    /// `10 (Δt + Δx²)`
    pub bound: f64,
}

impl ResidualReport {
    pub fn within_bound(&self) -> bool {
        self.max_abs <= self.bound
    }

    /// `t, x, residual, active_branch` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,residual,active_branch")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.t, r.x, r.residual, r.branch.as_str())?;
        }
        Ok(())
    }
}

/// Discrete min-form residual
/// `min((v_i - S v_{i+1}) / Δt, min_k h(H^{e_k} v_i - v_i, e_k))` at every
/// interior node of layers `0..N`, `S` being the explicit PDE step.
pub fn residual_check(
    v: &ValueGrid,
    spec: &ModelSpec,
    marks: &MarkSpace,
    scheme: &FdScheme,
) -> ResidualReport {
    let st = Stencil::new(spec, marks, scheme.space, scheme.boundary);
    let dt = scheme.time.dt();
    let steps = v.steps();
    let len = scheme.space.len();
    let mut rows = Vec::new();
    for i in 0..steps {
        let pde = st.step(v.layer(i + 1), dt, v.layer(steps), |_, _| 0.0);
        let cur = v.layer(i);
        let grad = central_gradient(cur, &scheme.space);
        for j in 1..len - 1 {
            let a = (cur[j] - pde[j]) / dt;
            let b = marks
                .nodes()
                .iter()
                .enumerate()
                .map(|(k, &e)| spec.constraint(st.nonlocal(cur, grad[j], j, k) - cur[j], e))
                .fold(f64::INFINITY, f64::min);
            let (residual, branch) = if a <= b {
                (a, Branch::Pde)
            } else {
                (b, Branch::Obstacle)
            };
            rows.push(ResidualRow {
                i,
                j,
                t: v.times[i],
                x: scheme.space.x(j),
                residual,
                branch,
            });
        }
    }
    let mut max_abs = 0.0;
    let mut worst = None;
    for r in &rows {
        if r.residual.abs() > max_abs || worst.is_none() {
            max_abs = r.residual.abs();
            worst = Some((r.i, r.j));
        }
    }
    let total = rows.len().max(1) as f64;
    let pde = rows.iter().filter(|r| r.branch == Branch::Pde).count() as f64;
    let dx = scheme.space.dx();
    ResidualReport {
        max_abs,
        worst,
        pde_fraction: pde / total,
        obstacle_fraction: (rows.len() as f64 - pde) / total,
        bound: 10.0 * (dt + dx * dx),
        rows,
    }
}
