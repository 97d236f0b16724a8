use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum MarkDensity {
    Uniform,
    /// Point masses `(node, weight)`.
    Atoms(Vec<(f64, f64)>),
}

/// Finite intensity measure on an interval of marks.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkMeasureSpec {
    pub support: (f64, f64),
    pub density: MarkDensity,
    mass: f64,
}

impl MarkMeasureSpec {
    pub fn uniform(lo: f64, hi: f64, mass: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Invalid(format!("bad mark support [{lo}, {hi}]")));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NonpositiveMass(mass));
        }
        Ok(MarkMeasureSpec {
            support: (lo, hi),
            density: MarkDensity::Uniform,
            mass,
        })
    }

    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Invalid("empty atom list".into()));
        }
        if let Some(&(_, w)) = atoms.iter().find(|(_, w)| !(*w > 0.0)) {
            return Err(Error::NonpositiveMass(w));
        }
        let lo = atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
        let hi = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
        let mass = atoms.iter().map(|a| a.1).sum();
        Ok(MarkMeasureSpec {
            support: (lo, hi),
            density: MarkDensity::Atoms(atoms),
            mass,
        })
    }

    /// `lambda(E)`
    pub fn total_mass(&self) -> f64 {
        self.mass
    }
}

/// Atom quadrature of the mark measure. All solvers treat the node set as the
/// mark space itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkSpace {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl MarkSpace {
    pub fn from_atoms(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::Invalid("mark nodes and weights must match".into()));
        }
        if let Some(&w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::NonpositiveMass(w));
        }
        Ok(MarkSpace { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Midpoint rule with `k` cells for a uniform density; atoms are copied
/// verbatim (and `k` is ignored).
pub fn discretize_marks(measure: &MarkMeasureSpec, k: usize) -> Result<MarkSpace> {
    if k == 0 {
        return Err(Error::Invalid("mark count must be at least 1".into()));
    }
    match &measure.density {
        MarkDensity::Uniform => {
            let (lo, hi) = measure.support;
            let h = (hi - lo) / k as f64;
            let w = measure.total_mass() / k as f64;
            let nodes = (0..k).map(|i| lo + (i as f64 + 0.5) * h).collect();
            MarkSpace::from_atoms(nodes, vec![w; k])
        }
        MarkDensity::Atoms(atoms) => MarkSpace::from_atoms(
            atoms.iter().map(|a| a.0).collect(),
            atoms.iter().map(|a| a.1).collect(),
        ),
    }
}
