//! Uniform one-dimensional grids shared by the finite-difference and
//! dynamic-programming solvers.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    lo: f64,
    dx: f64,
    intervals: usize,
}

impl SpaceGrid {
    /// `[lo, hi]` with spacing `dx`; `(hi - lo) / dx` must be an integer up
    /// to rounding.
    pub fn new(lo: f64, hi: f64, dx: f64) -> Result<Self> {
        if !(hi > lo) || !(dx > 0.0) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Invalid(format!(
                "bad space grid [{lo}, {hi}] with dx = {dx}"
            )));
        }
        let ratio = (hi - lo) / dx;
        let intervals = ratio.round();
        if (ratio - intervals).abs() > 1e-6 * ratio.max(1.0) || intervals < 2.0 {
            return Err(Error::Invalid(format!(
                "box width {} is not a multiple of dx = {dx} (or fewer than 2 cells)",
                hi - lo
            )));
        }
        Ok(SpaceGrid {
            lo,
            dx,
            intervals: intervals as usize,
        })
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.x(self.intervals)
    }

    pub fn x(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.dx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.x(j)).collect()
    }

    /// Nearest node index.
    pub fn nearest(&self, x: f64) -> usize {
        (((x - self.lo) / self.dx).round().max(0.0) as usize).min(self.intervals)
    }

    /// Linear interpolation of nodal values, constant outside the box.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let s = (x - self.lo) / self.dx;
        if s <= 0.0 {
            return values[0];
        }
        if s >= self.intervals as f64 {
            return values[self.intervals];
        }
        let j = s.floor() as usize;
        let w = s - j as f64;
        if w == 0.0 {
            values[j]
        } else {
            values[j] + w * (values[j + 1] - values[j])
        }
    }
}

/// Time-indexed sequence of grid functions, layer `i` at time `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub space: SpaceGrid,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ValueGrid {
    pub fn layer(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Interpolated value at `(t_i, x)`.
    pub fn value_at(&self, i: usize, x: f64) -> f64 {
        self.space.interpolate(&self.values[i], x)
    }

    /// Largest absolute nodal difference at layer `i`.
    pub fn sup_distance(&self, other: &ValueGrid, i: usize) -> f64 {
        self.values[i]
            .iter()
            .zip(&other.values[i])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute difference over all layers.
    pub fn sup_distance_all(&self, other: &ValueGrid) -> f64 {
        (0..self.values.len())
            .map(|i| self.sup_distance(other, i))
            .fold(0.0, f64::max)
    }

    /// `t, x, value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,value")?;
        for (t, layer) in self.times.iter().zip(&self.values) {
            for (j, v) in layer.iter().enumerate() {
                writeln!(w, "{},{},{}", t, self.space.x(j), v)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_caps_at_box() {
        let g = SpaceGrid::new(0.0, 10.0, 1.0).unwrap();
        let v = g.points();
        assert_eq!(g.interpolate(&v, 9.5 + 1.0), 10.0);
        assert_eq!(g.interpolate(&v, 3.25), 3.25);
        assert_eq!(g.interpolate(&v, -2.0), 0.0);
    }

    #[test]
    fn rejects_incommensurate_box() {
        assert!(SpaceGrid::new(0.0, 1.0, 0.3).is_err());
        let g = SpaceGrid::new(-6.0, 6.0, 0.05).unwrap();
        assert_eq!(g.len(), 241);
        assert_eq!(g.nearest(0.0), 120);
    }
}
