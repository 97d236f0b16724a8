//! Dual oracle for the impulse-control case (f and c free of y and z,
//! `h(u, e) = -u`): the penalized value is the supremum over jump
//! intensities `ν ∈ [0, n]` of a reweighted expectation.
//!
//! By linearity `sup_{ν ∈ [0, n]} ν u = n max(u, 0)`, so the lattice
//! recursion below coincides with the explicit penalized finite-difference
//! scheme on the same grid. The tree oracle instead enumerates every
//! bang-bang feedback policy on a small scenario tree.
//!
//! The tree moves by `±Δx`, by a jump `γ`, or stays put, with the weights
//! of the explicit lattice stencil and jump weight `q = ν λ(E) Δt`. Under
//! the CFL bound these are probabilities; outside it they are still used
//! as signed weights (e.g. `q > 1` with no diffusion).

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::ValueGrid;
use crate::model::{MarkSpace, ModelSpec};
use crate::qvi::{local_maxima, march, terminal_layer, FdScheme, Stencil};

/// Relative slack on the diffusion CFL bound.
const CFL_SLACK: f64 = 1e-9;
/// Largest number of feedback policies the tree oracle will enumerate.
pub const MAX_TREE_POLICIES: usize = 1 << 20;
pub const MAX_TREE_DEPTH: usize = 4;

fn require_impulse(spec: &ModelSpec, what: &'static str) -> Result<()> {
    if spec.dim() != 1 {
        return Err(Error::NotOneDimensional(what));
    }
    if !spec.is_impulse_shape() {
        return Err(Error::NotImpulseShape(what));
    }
    Ok(())
}

/// Backward intensity-control recursion
/// `v_i = E_diff[v_{i+1}] + Δt f + Δt Σ_k λ_k sup_{ν ∈ [0, n]} ν u_k`,
/// `u_k = v_{i+1}(x + γ(x, e_k)) + c(x, e_k) - v_{i+1}(x)`.
pub fn dual_value_lattice(
    spec: &ModelSpec,
    marks: &MarkSpace,
    scheme: &FdScheme,
    n: f64,
) -> Result<ValueGrid> {
    require_impulse(spec, "dual oracle")?;
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::Invalid(format!("penalization level {n}")));
    }
    let (s2, b) = local_maxima(spec, &scheme.space);
    let dx = scheme.space.dx();
    let ratio = scheme.time.dt() * (s2 / (dx * dx) + b / dx);
    if ratio > 1.0 + CFL_SLACK {
        return Err(Error::Cfl { ratio });
    }
    let st = Stencil::new(spec, marks, scheme.space, scheme.boundary);
    let terminal = terminal_layer(spec, &scheme.space);
    // Bang-bang: the supremum of a linear function of ν sits at 0 or n.
    let sup = |u: f64, _e: f64| (0.0 * u).max(n * u);
    march(scheme, terminal, "dual lattice layer", |v, t| {
        st.step(v, scheme.time.dt(), t, sup)
    })
}

/// Scenario tree over `depth` steps: node states per step, keyed by their
/// rounded position so coinciding branches share a feedback decision.
struct Tree {
    dt: f64,
    dx: f64,
    /// `states[i]` holds the distinct positions reachable at step `i`.
    states: Vec<Vec<f64>>,
    index: Vec<HashMap<i64, usize>>,
}

fn key(x: f64) -> i64 {
    (x * 1e9).round() as i64
}

impl Tree {
    fn build(spec: &ModelSpec, e: f64, depth: usize, dx: f64) -> Tree {
        let dt = spec.horizon() / depth as f64;
        let x0 = spec.x0()[0];
        let mut tree = Tree {
            dt,
            dx,
            states: vec![vec![x0]],
            index: vec![HashMap::from([(key(x0), 0)])],
        };
        for i in 0..depth {
            let mut next = Vec::new();
            let mut idx = HashMap::new();
            for &x in &tree.states[i] {
                for y in tree.successors(spec, e, x) {
                    idx.entry(key(y)).or_insert_with(|| {
                        next.push(y);
                        next.len() - 1
                    });
                }
            }
            tree.states.push(next);
            tree.index.push(idx);
        }
        tree
    }

    /// Up, down, jump and stay successors.
    fn successors(&self, spec: &ModelSpec, e: f64, x: f64) -> [f64; 4] {
        [x + self.dx, x - self.dx, x + spec.jump1(x, e), x]
    }

    /// Branch weights for jump weight `q`: the explicit lattice stencil,
    /// nonnegative exactly when the CFL bound holds.
    fn weights(&self, spec: &ModelSpec, x: f64, q: f64) -> [f64; 4] {
        let (dt, dx) = (self.dt, self.dx);
        let s = spec.diffusion1(x);
        let b = spec.drift1(x);
        let half = 0.5 * s * s * dt / (dx * dx);
        let up = half + b.max(0.0) * dt / dx;
        let down = half + (-b).max(0.0) * dt / dx;
        [up, down, q, 1.0 - up - down - q]
    }

    fn decision_count(&self) -> usize {
        self.states[..self.states.len() - 1]
            .iter()
            .map(Vec::len)
            .sum()
    }

    /// Offset of step `i` in a flat decision vector.
    fn offsets(&self) -> Vec<usize> {
        let mut out = vec![0];
        for s in &self.states[..self.states.len() - 1] {
            out.push(out.last().unwrap() + s.len());
        }
        out
    }
}

struct TreeProblem<'a> {
    spec: &'a ModelSpec,
    e: f64,
    lambda: f64,
    depth: usize,
    tree: Tree,
}

impl<'a> TreeProblem<'a> {
    fn new(spec: &'a ModelSpec, marks: &MarkSpace, depth: usize, dx: f64) -> Result<Self> {
        require_impulse(spec, "dual tree oracle")?;
        if marks.len() != 1 {
            return Err(Error::MultiMark(marks.len()));
        }
        if depth == 0 || depth > MAX_TREE_DEPTH {
            return Err(Error::TreeTooLarge(format!(
                "depth {depth} outside 1..={MAX_TREE_DEPTH}"
            )));
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::Invalid(format!("tree spacing {dx}")));
        }
        let e = marks.nodes()[0];
        Ok(TreeProblem {
            spec,
            e,
            lambda: marks.weights()[0],
            depth,
            tree: Tree::build(spec, e, depth, dx),
        })
    }

    fn state_index(&self, i: usize, x: f64) -> usize {
        self.tree.index[i][&key(x)]
    }

    fn cost(&self, x: f64) -> f64 {
        self.spec.cost(&[x], 0.0, &[0.0], self.e)
    }

    fn running(&self, x: f64) -> f64 {
        self.tree.dt * self.spec.generator(&[x], 0.0, &[0.0])
    }

    /// Expected payoff of one feedback policy, summed leaf by leaf over
    /// every branch sequence.
    fn evaluate_policy(&self, nu: &[f64], offsets: &[usize]) -> f64 {
        let dt = self.tree.dt;
        let mut total = 0.0;
        for code in 0..4usize.pow(self.depth as u32) {
            let mut x = self.spec.x0()[0];
            let mut weight = 1.0;
            let mut payoff = 0.0;
            let mut rest = code;
            for i in 0..self.depth {
                let q = nu[offsets[i] + self.state_index(i, x)] * self.lambda * dt;
                payoff += self.running(x);
                let b = rest % 4;
                rest /= 4;
                weight *= self.tree.weights(self.spec, x, q)[b];
                if b == 2 {
                    payoff += self.cost(x);
                }
                x = self.tree.successors(self.spec, self.e, x)[b];
                if weight == 0.0 {
                    break;
                }
            }
            if weight != 0.0 {
                total += weight * (payoff + self.spec.terminal(&[x]));
            }
        }
        total
    }

    fn enumerate(&self, levels: &[f64]) -> Result<f64> {
        let decisions = self.tree.decision_count();
        let count = (levels.len() as f64).powi(decisions as i32);
        if count > MAX_TREE_POLICIES as f64 {
            return Err(Error::TreeTooLarge(format!(
                "{count} policies over {decisions} tree states at depth {}",
                self.depth
            )));
        }
        let offsets = self.tree.offsets();
        let best = (0..count as usize)
            .into_par_iter()
            .map(|mut code| {
                let nu: Vec<f64> = (0..decisions)
                    .map(|_| {
                        let l = levels[code % levels.len()];
                        code /= levels.len();
                        l
                    })
                    .collect();
                self.evaluate_policy(&nu, &offsets)
            })
            .reduce(|| f64::NEG_INFINITY, f64::max);
        Ok(best)
    }

    /// Backward induction on the same tree, maximizing over `levels` at
    /// every state.
    fn dynamic_programming(&self, levels: &[f64]) -> f64 {
        let dt = self.tree.dt;
        let mut next: Vec<f64> = self.tree.states[self.depth]
            .iter()
            .map(|&x| self.spec.terminal(&[x]))
            .collect();
        for i in (0..self.depth).rev() {
            let cur = self.tree.states[i]
                .iter()
                .map(|&x| {
                    let succ = self.tree.successors(self.spec, self.e, x);
                    let v: Vec<f64> = succ
                        .iter()
                        .map(|&y| next[self.state_index(i + 1, y)])
                        .collect();
                    levels
                        .iter()
                        .map(|&nu| {
                            let w = self.tree.weights(self.spec, x, nu * self.lambda * dt);
                            self.running(x)
                                + w[0] * v[0]
                                + w[1] * v[1]
                                + w[2] * (self.cost(x) + v[2])
                                + w[3] * v[3]
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            next = cur;
        }
        next[0]
    }
}

/// Exact maximum over bang-bang feedback controls `ν ∈ {0, n}` on the
/// scenario tree of `depth` steps with spatial step `dx`, by full
/// enumeration.
pub fn dual_value_tree(
    spec: &ModelSpec,
    marks: &MarkSpace,
    depth: usize,
    n: f64,
    dx: f64,
) -> Result<f64> {
    dual_value_tree_levels(spec, marks, depth, &[0.0, n], dx)
}

/// As [`dual_value_tree`] with an arbitrary finite set of intensity levels.
pub fn dual_value_tree_levels(
    spec: &ModelSpec,
    marks: &MarkSpace,
    depth: usize,
    levels: &[f64],
    dx: f64,
) -> Result<f64> {
    if levels.is_empty() || levels.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::Invalid(
            "intensity levels must be finite and nonnegative".into(),
        ));
    }
    TreeProblem::new(spec, marks, depth, dx)?.enumerate(levels)
}

/// Backward induction on the tree used by [`dual_value_tree`].
pub fn dual_value_tree_dp(
    spec: &ModelSpec,
    marks: &MarkSpace,
    depth: usize,
    n: f64,
    dx: f64,
) -> Result<f64> {
    Ok(TreeProblem::new(spec, marks, depth, dx)?.dynamic_programming(&[0.0, n]))
}
