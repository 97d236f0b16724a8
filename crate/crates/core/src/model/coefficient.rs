//! Parametric coefficient catalog.
//!
//! Every model coefficient is a [`CoefficientSpec`]: a family tag, a flat
//! parameter vector and the list of input slots it reads. Evaluation is a
//! single `match` on the family, so solvers can call it in inner loops.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `a`
    Constant,
    /// `w . inputs + intercept`, one weight per scalar read.
    Affine,
    /// `beta * e`
    ScaledMarkShift,
    /// `clamp(kappa * (e - x), -bound, bound)`
    BoundedShift,
    /// Piecewise-linear table `x0,y0,x1,y1,...`, flat outside the knots.
    Tabulated,
    /// `a |s|^2 + b s + c` in the primary input.
    Quadratic,
    /// `max(slope * s - strike, 0)` in the primary input.
    PositivePart,
    /// `-s`
    Negate,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Constant => "constant",
            Family::Affine => "affine",
            Family::ScaledMarkShift => "scaled-mark-shift",
            Family::BoundedShift => "bounded-shift",
            Family::Tabulated => "tabulated",
            Family::Quadratic => "quadratic",
            Family::PositivePart => "positive-part",
            Family::Negate => "negate",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "constant" => Family::Constant,
            "affine" => Family::Affine,
            "scaled-mark-shift" => Family::ScaledMarkShift,
            "bounded-shift" => Family::BoundedShift,
            "tabulated" => Family::Tabulated,
            "quadratic" => Family::Quadratic,
            "positive-part" => Family::PositivePart,
            "negate" => Family::Negate,
            other => return Err(Error::UnknownFamily(other.to_string())),
        })
    }
}

/// Input slot a coefficient may read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    X,
    Y,
    Z,
    E,
    U,
}

impl FromStr for Slot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "x" => Slot::X,
            "y" => Slot::Y,
            "z" => Slot::Z,
            "e" => Slot::E,
            "u" => Slot::U,
            other => return Err(Error::Invalid(format!("unknown input slot `{other}`"))),
        })
    }
}

/// The seven coefficient roles of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Drift,
    Diffusion,
    Jump,
    Generator,
    Cost,
    Terminal,
    Constraint,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::Drift,
        Role::Diffusion,
        Role::Jump,
        Role::Generator,
        Role::Cost,
        Role::Terminal,
        Role::Constraint,
    ];

    /// Config key prefix.
    pub fn key(self) -> &'static str {
        match self {
            Role::Drift => "b",
            Role::Diffusion => "sigma",
            Role::Jump => "gamma",
            Role::Generator => "f",
            Role::Cost => "c",
            Role::Terminal => "g",
            Role::Constraint => "h",
        }
    }

    pub fn slots(self) -> &'static [Slot] {
        match self {
            Role::Drift | Role::Diffusion | Role::Terminal => &[Slot::X],
            Role::Jump => &[Slot::X, Slot::E],
            Role::Generator => &[Slot::X, Slot::Y, Slot::Z],
            Role::Cost => &[Slot::X, Slot::Y, Slot::Z, Slot::E],
            Role::Constraint => &[Slot::U, Slot::E],
        }
    }

    /// Drift, diffusion and jump act componentwise: the x slot is one coordinate.
    pub fn componentwise(self) -> bool {
        matches!(self, Role::Drift | Role::Diffusion | Role::Jump)
    }

    fn slot_width(self, slot: Slot, dim: usize) -> usize {
        match slot {
            Slot::X if !self.componentwise() => dim,
            Slot::Z => dim,
            _ => 1,
        }
    }
}

/// Arguments for a single evaluation. Unused slots are ignored.
#[derive(Debug, Clone, Copy)]
pub struct Inputs<'a> {
    pub x: &'a [f64],
    pub y: f64,
    pub z: &'a [f64],
    pub e: f64,
    pub u: f64,
}

impl<'a> Inputs<'a> {
    pub fn x(x: &'a [f64]) -> Self {
        Inputs {
            x,
            y: 0.0,
            z: &[],
            e: 0.0,
            u: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSpec {
    family: Family,
    params: Vec<f64>,
    reads: Vec<Slot>,
}

impl CoefficientSpec {
    /// Unchecked constructor; [`CoefficientSpec::bind`] validates against a role.
    pub fn new(family: Family, params: Vec<f64>, reads: Option<Vec<Slot>>) -> Self {
        CoefficientSpec {
            family,
            params,
            reads: reads.unwrap_or_default(),
        }
    }

    pub fn constant(a: f64) -> Self {
        Self::new(Family::Constant, vec![a], None)
    }

    pub fn affine(params: Vec<f64>) -> Self {
        Self::new(Family::Affine, params, None)
    }

    pub fn negate() -> Self {
        Self::new(Family::Negate, vec![], None)
    }

    pub fn scaled_mark_shift(beta: f64) -> Self {
        Self::new(Family::ScaledMarkShift, vec![beta], None)
    }

    pub fn bounded_shift(kappa: f64, bound: f64) -> Self {
        Self::new(Family::BoundedShift, vec![kappa, bound], None)
    }

    pub fn quadratic(a: f64, b: f64, c: f64) -> Self {
        Self::new(Family::Quadratic, vec![a, b, c], None)
    }

    pub fn positive_part(slope: f64, strike: f64) -> Self {
        Self::new(Family::PositivePart, vec![slope, strike], None)
    }

    pub fn tabulated(knots: &[(f64, f64)]) -> Self {
        let params = knots.iter().flat_map(|&(x, y)| [x, y]).collect();
        Self::new(Family::Tabulated, params, None)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn reads(&self) -> &[Slot] {
        &self.reads
    }

    /// Fills in default reads for `role` and checks parameter counts.
    pub fn bind(mut self, role: Role, dim: usize) -> Result<Self> {
        let slots = role.slots();
        let default_reads: Vec<Slot> = match self.family {
            Family::Constant => vec![],
            Family::Affine => slots.to_vec(),
            Family::ScaledMarkShift => vec![Slot::E],
            Family::BoundedShift => vec![Slot::X, Slot::E],
            Family::Tabulated | Family::Quadratic | Family::PositivePart | Family::Negate => {
                vec![slots[0]]
            }
        };
        if self.reads.is_empty() {
            self.reads = default_reads;
        }
        for s in &self.reads {
            if !slots.contains(s) {
                return Err(Error::Invalid(format!(
                    "{}: role does not provide input {:?}",
                    role.key(),
                    s
                )));
            }
        }
        let single_read = matches!(
            self.family,
            Family::Tabulated | Family::Quadratic | Family::PositivePart | Family::Negate
        );
        if single_read && self.reads.len() != 1 {
            return Err(Error::Invalid(format!(
                "{}: family `{}` reads exactly one input",
                role.key(),
                self.family
            )));
        }
        if matches!(self.family, Family::BoundedShift) && self.reads != [Slot::X, Slot::E] {
            return Err(Error::Invalid(format!(
                "{}: bounded-shift reads (x, e)",
                role.key()
            )));
        }
        if matches!(self.family, Family::ScaledMarkShift) && self.reads != [Slot::E] {
            return Err(Error::Invalid(format!(
                "{}: scaled-mark-shift reads e",
                role.key()
            )));
        }

        let got = self.params.len();
        let count_err = |expected: String| Error::ParamCount {
            role: role.key(),
            family: self.family.name(),
            expected,
            got,
        };
        match self.family {
            Family::Constant | Family::ScaledMarkShift => {
                if got != 1 {
                    return Err(count_err("1".into()));
                }
            }
            Family::Affine => {
                let width: usize = self.reads.iter().map(|&s| role.slot_width(s, dim)).sum();
                if got != width + 1 {
                    return Err(count_err(format!("{}", width + 1)));
                }
            }
            Family::BoundedShift | Family::PositivePart => {
                if got != 2 {
                    return Err(count_err("2".into()));
                }
                if self.family == Family::BoundedShift && !(self.params[1] > 0.0) {
                    return Err(Error::Invalid(format!(
                        "{}: bounded-shift bound must be positive",
                        role.key()
                    )));
                }
            }
            Family::Quadratic => {
                if got != 3 {
                    return Err(count_err("3".into()));
                }
            }
            Family::Negate => {
                if got != 0 {
                    return Err(count_err("0".into()));
                }
            }
            Family::Tabulated => {
                if got < 2 || !got.is_multiple_of(2) {
                    return Err(count_err("an even number >= 2".into()));
                }
                let xs: Vec<f64> = self.params.iter().step_by(2).copied().collect();
                if xs.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::Invalid(format!(
                        "{}: tabulated knots must be strictly increasing",
                        role.key()
                    )));
                }
            }
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid(format!(
                "{}: non-finite parameter",
                role.key()
            )));
        }
        Ok(self)
    }

    fn primary(&self, inp: &Inputs) -> f64 {
        match self.reads[0] {
            Slot::X => inp.x.iter().sum(),
            Slot::Y => inp.y,
            Slot::Z => inp.z.iter().sum(),
            Slot::E => inp.e,
            Slot::U => inp.u,
        }
    }

    pub fn eval(&self, inp: &Inputs) -> f64 {
        let p = &self.params;
        match self.family {
            Family::Constant => p[0],
            Family::Affine => {
                let mut acc = 0.0;
                let mut w = 0;
                for &slot in &self.reads {
                    match slot {
                        Slot::X => {
                            for &xi in inp.x {
                                acc += p[w] * xi;
                                w += 1;
                            }
                        }
                        Slot::Z => {
                            for &zi in inp.z {
                                acc += p[w] * zi;
                                w += 1;
                            }
                        }
                        Slot::Y => {
                            acc += p[w] * inp.y;
                            w += 1;
                        }
                        Slot::E => {
                            acc += p[w] * inp.e;
                            w += 1;
                        }
                        Slot::U => {
                            acc += p[w] * inp.u;
                            w += 1;
                        }
                    }
                }
                acc + p[p.len() - 1]
            }
            Family::ScaledMarkShift => p[0] * inp.e,
            Family::BoundedShift => {
                let x: f64 = inp.x.iter().sum();
                (p[0] * (inp.e - x)).clamp(-p[1], p[1])
            }
            Family::Tabulated => interp_table(p, self.primary(inp)),
            Family::Quadratic => {
                let s = self.primary(inp);
                let sq = match self.reads[0] {
                    Slot::X => inp.x.iter().map(|v| v * v).sum(),
                    Slot::Z => inp.z.iter().map(|v| v * v).sum(),
                    _ => s * s,
                };
                p[0] * sq + p[1] * s + p[2]
            }
            Family::PositivePart => (p[0] * self.primary(inp) - p[1]).max(0.0),
            Family::Negate => -self.primary(inp),
        }
    }

    /// Declared Lipschitz constant with respect to the Euclidean norm of the
    /// inputs read, or `None` when the family is not globally Lipschitz.
    /// `width` is the dimension of vector slots (x in scalar roles, z).
    pub fn lipschitz(&self, width: usize) -> Option<f64> {
        let p = &self.params;
        let primary_width = match self.reads.first() {
            Some(Slot::X) | Some(Slot::Z) => width as f64,
            _ => 1.0,
        };
        Some(match self.family {
            Family::Constant => 0.0,
            Family::Affine => p[..p.len() - 1].iter().map(|w| w * w).sum::<f64>().sqrt(),
            Family::ScaledMarkShift => p[0].abs(),
            Family::BoundedShift => p[0].abs() * (width as f64 + 1.0).sqrt(),
            Family::Tabulated => {
                let slope = p
                    .chunks(2)
                    .collect::<Vec<_>>()
                    .windows(2)
                    .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                    .fold(0.0, f64::max);
                slope * primary_width.sqrt()
            }
            Family::Quadratic => {
                if p[0] != 0.0 {
                    return None;
                }
                p[1].abs() * primary_width.sqrt()
            }
            Family::PositivePart => p[0].abs() * primary_width.sqrt(),
            Family::Negate => primary_width.sqrt(),
        })
    }

    /// Whether the value can change with `slot`.
    pub fn depends_on(&self, slot: Slot, role: Role, dim: usize) -> bool {
        if !self.reads.contains(&slot) {
            return false;
        }
        if self.family != Family::Affine {
            return true;
        }
        let mut w = 0;
        for &s in &self.reads {
            let width = role.slot_width(s, dim);
            if s == slot {
                return self.params[w..w + width].iter().any(|&c| c != 0.0);
            }
            w += width;
        }
        false
    }

    /// True when this is `h(u, e) = -u`.
    pub fn is_negation(&self) -> bool {
        match self.family {
            Family::Negate => self.reads == [Slot::U],
            Family::Affine => {
                let mut coef_u = 0.0;
                let mut other = 0.0f64;
                for (i, s) in self.reads.iter().enumerate() {
                    if *s == Slot::U {
                        coef_u = self.params[i];
                    } else {
                        other = other.max(self.params[i].abs());
                    }
                }
                coef_u == -1.0 && other == 0.0 && self.params[self.params.len() - 1] == 0.0
            }
            _ => false,
        }
    }

    /// True for the constant-zero coefficient.
    pub fn is_zero(&self) -> bool {
        match self.family {
            Family::Constant => self.params[0] == 0.0,
            Family::Affine | Family::ScaledMarkShift | Family::Quadratic => {
                self.params.iter().all(|&p| p == 0.0)
            }
            Family::PositivePart => self.params[0] == 0.0 && self.params[1] >= 0.0,
            Family::Tabulated => self.params.iter().skip(1).step_by(2).all(|&y| y == 0.0),
            Family::BoundedShift => self.params[0] == 0.0,
            Family::Negate => false,
        }
    }
}

fn interp_table(p: &[f64], s: f64) -> f64 {
    let n = p.len() / 2;
    if s <= p[0] {
        return p[1];
    }
    if s >= p[2 * (n - 1)] {
        return p[2 * n - 1];
    }
    for k in 0..n - 1 {
        let (x0, y0, x1, y1) = (p[2 * k], p[2 * k + 1], p[2 * k + 2], p[2 * k + 3]);
        if s <= x1 {
            return y0 + (y1 - y0) * (s - x0) / (x1 - x0);
        }
    }
    p[2 * n - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bound(c: CoefficientSpec, role: Role) -> CoefficientSpec {
        c.bind(role, 1).unwrap()
    }

    #[test]
    fn affine_terminal_is_identity() {
        let g = bound(CoefficientSpec::affine(vec![1.0, 0.0]), Role::Terminal);
        assert_eq!(g.eval(&Inputs::x(&[3.5])), 3.5);
    }

    #[test]
    fn param_count_mismatch_is_rejected() {
        let err = CoefficientSpec::affine(vec![1.0]).bind(Role::Terminal, 1);
        assert!(matches!(err, Err(Error::ParamCount { .. })));
        let err = CoefficientSpec::new(Family::Constant, vec![], None).bind(Role::Cost, 1);
        assert!(matches!(err, Err(Error::ParamCount { .. })));
    }

    #[test]
    fn unknown_family_name() {
        assert!(matches!(
            "cubic-spline".parse::<Family>(),
            Err(Error::UnknownFamily(_))
        ));
    }

    #[test]
    fn scaled_mark_shift_reads_mark() {
        let g = bound(CoefficientSpec::scaled_mark_shift(1.0), Role::Jump);
        let inp = Inputs {
            e: 0.7,
            ..Inputs::x(&[100.0])
        };
        assert_eq!(g.eval(&inp), 0.7);
    }

    #[test]
    fn negation_detection() {
        let h = bound(CoefficientSpec::negate(), Role::Constraint);
        assert!(h.is_negation());
        let h = bound(
            CoefficientSpec::affine(vec![-1.0, 0.0, 0.0]),
            Role::Constraint,
        );
        assert!(h.is_negation());
        let h = bound(
            CoefficientSpec::affine(vec![1.0, 0.0, 0.0]),
            Role::Constraint,
        );
        assert!(!h.is_negation());
    }

    #[test]
    fn tabulated_is_flat_outside() {
        let t = bound(
            CoefficientSpec::tabulated(&[(0.0, 1.0), (1.0, 3.0)]),
            Role::Terminal,
        );
        assert_eq!(t.eval(&Inputs::x(&[-5.0])), 1.0);
        assert_eq!(t.eval(&Inputs::x(&[0.5])), 2.0);
        assert_eq!(t.eval(&Inputs::x(&[9.0])), 3.0);
        assert_eq!(t.lipschitz(1), Some(2.0));
    }

    #[test]
    fn dependency_on_y_via_zero_weight() {
        let c = bound(
            CoefficientSpec::affine(vec![0.0, 0.0, 0.0, 0.0, 1.0]),
            Role::Cost,
        );
        assert!(!c.depends_on(Slot::Y, Role::Cost, 1));
        let c = bound(
            CoefficientSpec::affine(vec![0.0, 0.5, 0.0, 0.0, 1.0]),
            Role::Cost,
        );
        assert!(c.depends_on(Slot::Y, Role::Cost, 1));
    }
}
