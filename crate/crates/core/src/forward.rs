//! Forward jump-diffusion simulation on a uniform time grid.
//!
//! Each step draws the Brownian increment, then an exact Poisson count of
//! jumps with marks drawn from the node weights. Jumps are applied after the
//! Euler increment, in draw order, each evaluating `gamma` at the state just
//! before it. Paths are simulated in fixed blocks, block `b` drawing from
//! ChaCha stream `b` of the seed, so output does not depend on the number of
//! worker threads.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{MarkSpace, ModelSpec};

/// Paths per random substream.
pub const BLOCK_PATHS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Invalid("time grid needs at least one step".into()));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::NonpositiveHorizon(horizon));
        }
        Ok(TimeGrid { steps, horizon })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_i = i T / N`, with `t_N = T` exactly.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }
}

/// Whether simulated jump events move the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JumpMode {
    #[default]
    Apply,
    /// Draw and record jump events but leave the state untouched.
    Suppress,
}

/// `M` simulated paths with their Brownian increments and jump events.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    paths: usize,
    steps: usize,
    dim: usize,
    seed: u64,
    dt: f64,
    /// `[m][i][j]`, `i` in `0..=N`
    states: Vec<f64>,
    /// `[m][i][j]`, `i` in `0..N`
    increments: Vec<f64>,
    /// CSR offsets into `jump_marks`, indexed by `m * N + i`.
    jump_offsets: Vec<u32>,
    jump_marks: Vec<u32>,
}

impl PathBundle {
    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `X[m][i]`
    pub fn state(&self, m: usize, i: usize) -> &[f64] {
        let o = (m * (self.steps + 1) + i) * self.dim;
        &self.states[o..o + self.dim]
    }

    /// `W(t_{i+1}) - W(t_i)` on path `m`.
    pub fn increment(&self, m: usize, i: usize) -> &[f64] {
        let o = (m * self.steps + i) * self.dim;
        &self.increments[o..o + self.dim]
    }

    /// Mark-node indices of the jumps in `(t_i, t_{i+1}]` on path `m`.
    pub fn jumps(&self, m: usize, i: usize) -> &[u32] {
        let k = m * self.steps + i;
        &self.jump_marks[self.jump_offsets[k] as usize..self.jump_offsets[k + 1] as usize]
    }

    pub fn jump_count(&self, m: usize) -> usize {
        let lo = self.jump_offsets[m * self.steps] as usize;
        let hi = self.jump_offsets[(m + 1) * self.steps] as usize;
        hi - lo
    }

    /// States of all paths at step `i`, flattened `[m][j]`.
    pub fn states_at(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.paths * self.dim);
        for m in 0..self.paths {
            out.extend_from_slice(self.state(m, i));
        }
        out
    }

    /// All states at all times, flattened `[m][i][j]`.
    pub fn states_at_all(&self) -> &[f64] {
        &self.states
    }

    /// Little-endian dump: header `M, N, d, seed` as u64 and `dt` as f64, then states and
    /// Brownian increments row-major as f64, then per path a u64 jump count
    /// followed by `(step, mark)` u64 pairs.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for h in [
            self.paths as u64,
            self.steps as u64,
            self.dim as u64,
            self.seed,
        ] {
            w.write_all(&h.to_le_bytes())?;
        }
        w.write_all(&self.dt.to_le_bytes())?;
        for v in self.states.iter().chain(&self.increments) {
            w.write_all(&v.to_le_bytes())?;
        }
        for m in 0..self.paths {
            w.write_all(&(self.jump_count(m) as u64).to_le_bytes())?;
            for i in 0..self.steps {
                for &k in self.jumps(m, i) {
                    w.write_all(&(i as u64).to_le_bytes())?;
                    w.write_all(&(k as u64).to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut buf)?;
            Ok(buf)
        };
        let paths = u64::from_le_bytes(next(&mut r)?) as usize;
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let dim = u64::from_le_bytes(next(&mut r)?) as usize;
        let seed = u64::from_le_bytes(next(&mut r)?);
        let dt = f64::from_le_bytes(next(&mut r)?);
        let mut read_f64s = |n: usize, r: &mut R| -> Result<Vec<f64>> {
            (0..n).map(|_| Ok(f64::from_le_bytes(next(r)?))).collect()
        };
        let states = read_f64s(paths * (steps + 1) * dim, &mut r)?;
        let increments = read_f64s(paths * steps * dim, &mut r)?;
        let mut jump_offsets = vec![0u32; paths * steps + 1];
        let mut jump_marks = Vec::new();
        let mut buf = [0u8; 8];
        for m in 0..paths {
            r.read_exact(&mut buf)?;
            let count = u64::from_le_bytes(buf) as usize;
            let mut events = Vec::with_capacity(count);
            for _ in 0..count {
                r.read_exact(&mut buf)?;
                let step = u64::from_le_bytes(buf) as usize;
                r.read_exact(&mut buf)?;
                events.push((step, u64::from_le_bytes(buf) as u32));
            }
            let mut e = 0;
            for i in 0..steps {
                while e < events.len() && events[e].0 == i {
                    jump_marks.push(events[e].1);
                    e += 1;
                }
                jump_offsets[m * steps + i + 1] = jump_marks.len() as u32;
            }
        }
        Ok(PathBundle {
            paths,
            steps,
            dim,
            seed,
            dt,
            states,
            increments,
            jump_offsets,
            jump_marks,
        })
    }
}

/// Simulates `m` paths of the forward SDE.
pub fn simulate_paths(
    spec: &ModelSpec,
    marks: &MarkSpace,
    grid: &TimeGrid,
    m: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_paths_with(spec, marks, grid, m, seed, JumpMode::Apply)
}

struct Block {
    states: Vec<f64>,
    increments: Vec<f64>,
    counts: Vec<u32>,
    marks: Vec<u32>,
}

pub fn simulate_paths_with(
    spec: &ModelSpec,
    marks: &MarkSpace,
    grid: &TimeGrid,
    m: usize,
    seed: u64,
    mode: JumpMode,
) -> Result<PathBundle> {
    if m == 0 {
        return Err(Error::Invalid("path count must be at least 1".into()));
    }
    let d = spec.dim();
    let n = grid.steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mass = marks.total_mass();
    let poisson = Poisson::new(mass * dt)
        .map_err(|e| Error::Invalid(format!("jump intensity {}: {e}", mass * dt)))?;
    let picker = WeightedIndex::new(marks.weights())
        .map_err(|e| Error::Invalid(format!("mark weights: {e}")))?;
    let nodes = marks.nodes();

    let blocks = m.div_ceil(BLOCK_PATHS);
    let simulate_block = |b: usize| -> Block {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let lo = b * BLOCK_PATHS;
        let hi = (lo + BLOCK_PATHS).min(m);
        let count = hi - lo;
        let mut blk = Block {
            states: Vec::with_capacity(count * (n + 1) * d),
            increments: Vec::with_capacity(count * n * d),
            counts: Vec::with_capacity(count * n),
            marks: Vec::new(),
        };
        let mut x = vec![0.0; d];
        let mut drift = vec![0.0; d];
        let mut vol = vec![0.0; d];
        let mut shift = vec![0.0; d];
        for _ in 0..count {
            x.copy_from_slice(spec.x0());
            blk.states.extend_from_slice(&x);
            for _ in 0..n {
                spec.drift(&x, &mut drift);
                spec.diffusion(&x, &mut vol);
                for j in 0..d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let dw = z * sqrt_dt;
                    blk.increments.push(dw);
                    x[j] += drift[j] * dt + vol[j] * dw;
                }
                let jumps = poisson.sample(&mut rng) as u32;
                blk.counts.push(jumps);
                for _ in 0..jumps {
                    let k = picker.sample(&mut rng);
                    blk.marks.push(k as u32);
                    if mode == JumpMode::Apply {
                        spec.jump(&x, nodes[k], &mut shift);
                        for j in 0..d {
                            x[j] += shift[j];
                        }
                    }
                }
                blk.states.extend_from_slice(&x);
            }
        }
        blk
    };
    let parts: Vec<Block> = (0..blocks).into_par_iter().map(simulate_block).collect();

    let mut states = Vec::with_capacity(m * (n + 1) * d);
    let mut increments = Vec::with_capacity(m * n * d);
    let mut jump_offsets = Vec::with_capacity(m * n + 1);
    let mut jump_marks = Vec::new();
    jump_offsets.push(0u32);
    for blk in parts {
        states.extend_from_slice(&blk.states);
        increments.extend_from_slice(&blk.increments);
        let mut cursor = 0usize;
        for c in blk.counts {
            let c = c as usize;
            jump_marks.extend_from_slice(&blk.marks[cursor..cursor + c]);
            cursor += c;
            jump_offsets.push(jump_marks.len() as u32);
        }
    }
    Ok(PathBundle {
        paths: m,
        steps: n,
        dim: d,
        seed,
        dt,
        states,
        increments,
        jump_offsets,
        jump_marks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    /// Sample mean of `sup_i |X_i|^2`.
    pub mean_sup_square: f64,
    /// Sample mean of `|X_i|^2` per grid time.
    pub second_moments: Vec<f64>,
    /// Sample mean of `X_i` per grid time.
    pub means: Vec<Vec<f64>>,
}

pub fn path_moments(bundle: &PathBundle) -> MomentReport {
    let (m, n, d) = (bundle.paths(), bundle.steps(), bundle.dim());
    let mut sup_sum = 0.0;
    let mut second = vec![0.0; n + 1];
    let mut means = vec![vec![0.0; d]; n + 1];
    for p in 0..m {
        let mut sup = 0.0f64;
        for i in 0..=n {
            let x = bundle.state(p, i);
            let sq: f64 = x.iter().map(|v| v * v).sum();
            sup = sup.max(sq);
            second[i] += sq;
            for (acc, v) in means[i].iter_mut().zip(x) {
                *acc += v;
            }
        }
        sup_sum += sup;
    }
    let inv = 1.0 / m as f64;
    second.iter_mut().for_each(|s| *s *= inv);
    means.iter_mut().flatten().for_each(|s| *s *= inv);
    MomentReport {
        mean_sup_square: sup_sum * inv,
        second_moments: second,
        means,
    }
}
