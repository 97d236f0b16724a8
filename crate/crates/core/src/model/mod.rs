//! Problem datum: coefficients, horizon, mark measure and the sampled
//! assumption checks.

mod coefficient;
mod config;
mod marks;
mod validate;

pub use coefficient::{CoefficientSpec, Family, Inputs, Role, Slot};
pub use config::{build_model, Config};
pub use marks::{discretize_marks, MarkDensity, MarkMeasureSpec, MarkSpace};
pub use validate::{validate_model, Check, ValidationReport};

use crate::error::{Error, Result};

/// Full problem datum shared read-only by every solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    dim: usize,
    horizon: f64,
    x0: Vec<f64>,
    drift: CoefficientSpec,
    diffusion: CoefficientSpec,
    jump: CoefficientSpec,
    generator: CoefficientSpec,
    cost: CoefficientSpec,
    terminal: CoefficientSpec,
    constraint: CoefficientSpec,
    marks: MarkMeasureSpec,
    mark_count: usize,
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn marks(&self) -> &MarkMeasureSpec {
        &self.marks
    }

    pub fn mark_count(&self) -> usize {
        self.mark_count
    }

    /// Quadrature of the mark measure with the configured node count.
    pub fn mark_space(&self) -> Result<MarkSpace> {
        discretize_marks(&self.marks, self.mark_count)
    }

    pub fn coefficient(&self, role: Role) -> &CoefficientSpec {
        match role {
            Role::Drift => &self.drift,
            Role::Diffusion => &self.diffusion,
            Role::Jump => &self.jump,
            Role::Generator => &self.generator,
            Role::Cost => &self.cost,
            Role::Terminal => &self.terminal,
            Role::Constraint => &self.constraint,
        }
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.drift.eval(&Inputs::x(std::slice::from_ref(xi)));
        }
    }

    /// Diagonal of the diffusion matrix.
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.diffusion.eval(&Inputs::x(std::slice::from_ref(xi)));
        }
    }

    pub fn jump(&self, x: &[f64], e: f64, out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.jump.eval(&Inputs {
                e,
                ..Inputs::x(std::slice::from_ref(xi))
            });
        }
    }

    /// Scalar shortcuts for the one-dimensional solvers.
    pub fn drift1(&self, x: f64) -> f64 {
        self.drift.eval(&Inputs::x(&[x]))
    }

    pub fn diffusion1(&self, x: f64) -> f64 {
        self.diffusion.eval(&Inputs::x(&[x]))
    }

    pub fn jump1(&self, x: f64, e: f64) -> f64 {
        self.jump.eval(&Inputs {
            e,
            ..Inputs::x(&[x])
        })
    }

    pub fn generator(&self, x: &[f64], y: f64, z: &[f64]) -> f64 {
        self.generator.eval(&Inputs {
            x,
            y,
            z,
            e: 0.0,
            u: 0.0,
        })
    }

    pub fn cost(&self, x: &[f64], y: f64, z: &[f64], e: f64) -> f64 {
        self.cost.eval(&Inputs { x, y, z, e, u: 0.0 })
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        self.terminal.eval(&Inputs::x(x))
    }

    pub fn constraint(&self, u: f64, e: f64) -> f64 {
        self.constraint.eval(&Inputs {
            e,
            u,
            ..Inputs::x(&[])
        })
    }

    /// `h^-(u, e) = max(-h(u, e), 0)`
    pub fn constraint_negative_part(&self, u: f64, e: f64) -> f64 {
        (-self.constraint(u, e)).max(0.0)
    }

    /// `h(u, e) = -u`
    pub fn has_obstacle_form(&self) -> bool {
        self.constraint.is_negation()
    }

    /// f and c free of (y, z) and `h = -u`: the impulse-control case with a
    /// dual intensity-control representation.
    pub fn is_impulse_shape(&self) -> bool {
        let free = |c: &CoefficientSpec, role| {
            !c.depends_on(Slot::Y, role, self.dim) && !c.depends_on(Slot::Z, role, self.dim)
        };
        free(&self.generator, Role::Generator)
            && free(&self.cost, Role::Cost)
            && self.has_obstacle_form()
    }

    pub fn diffusion_is_zero(&self) -> bool {
        self.diffusion.is_zero()
    }

    pub fn jump_is_zero(&self) -> bool {
        self.jump.is_zero()
    }

    /// Lipschitz constant of `u -> h(u, e)`, defaulting to 1 when undeclared.
    pub fn constraint_lipschitz(&self) -> f64 {
        self.constraint.lipschitz(1).unwrap_or(1.0)
    }

    pub fn to_builder(&self) -> ModelBuilder {
        ModelBuilder { spec: self.clone() }
    }
}

/// Programmatic construction of a [`ModelSpec`].
///
/// Defaults: d = 1, T = 1, x0 = 0, b = 0, sigma = 0, gamma = 0, f = 0, c = 0,
/// g = 0, h(u, e) = -u, uniform marks on [0, 1] with mass 1 and one node.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    spec: ModelSpec,
}

impl Default for ModelBuilder {
    fn default() -> Self {
        Self::new(1)
    }
}

impl ModelBuilder {
    pub fn new(dim: usize) -> Self {
        let zero = CoefficientSpec::constant(0.0);
        ModelBuilder {
            spec: ModelSpec {
                dim,
                horizon: 1.0,
                x0: vec![0.0; dim],
                drift: zero.clone(),
                diffusion: zero.clone(),
                jump: zero.clone(),
                generator: zero.clone(),
                cost: zero.clone(),
                terminal: zero,
                constraint: CoefficientSpec::negate(),
                marks: MarkMeasureSpec::uniform(0.0, 1.0, 1.0).expect("valid default"),
                mark_count: 1,
            },
        }
    }

    pub fn horizon(mut self, t: f64) -> Self {
        self.spec.horizon = t;
        self
    }

    pub fn x0(mut self, x0: Vec<f64>) -> Self {
        self.spec.x0 = x0;
        self
    }

    pub fn coefficient(mut self, role: Role, c: CoefficientSpec) -> Self {
        let slot = match role {
            Role::Drift => &mut self.spec.drift,
            Role::Diffusion => &mut self.spec.diffusion,
            Role::Jump => &mut self.spec.jump,
            Role::Generator => &mut self.spec.generator,
            Role::Cost => &mut self.spec.cost,
            Role::Terminal => &mut self.spec.terminal,
            Role::Constraint => &mut self.spec.constraint,
        };
        *slot = c;
        self
    }

    pub fn drift(self, c: CoefficientSpec) -> Self {
        self.coefficient(Role::Drift, c)
    }

    pub fn diffusion(self, c: CoefficientSpec) -> Self {
        self.coefficient(Role::Diffusion, c)
    }

    pub fn jump(self, c: CoefficientSpec) -> Self {
        self.coefficient(Role::Jump, c)
    }

    pub fn generator(self, c: CoefficientSpec) -> Self {
        self.coefficient(Role::Generator, c)
    }

    pub fn cost(self, c: CoefficientSpec) -> Self {
        self.coefficient(Role::Cost, c)
    }

    pub fn terminal(self, c: CoefficientSpec) -> Self {
        self.coefficient(Role::Terminal, c)
    }

    pub fn constraint(self, c: CoefficientSpec) -> Self {
        self.coefficient(Role::Constraint, c)
    }

    pub fn marks(mut self, m: MarkMeasureSpec, count: usize) -> Self {
        self.spec.marks = m;
        self.spec.mark_count = count;
        self
    }

    pub fn build(self) -> Result<ModelSpec> {
        let mut s = self.spec;
        if s.dim == 0 {
            return Err(Error::Invalid("dimension must be positive".into()));
        }
        if !(s.horizon > 0.0) || !s.horizon.is_finite() {
            return Err(Error::NonpositiveHorizon(s.horizon));
        }
        if s.x0.len() != s.dim {
            return Err(Error::Invalid(format!(
                "x0 has {} entries, expected {}",
                s.x0.len(),
                s.dim
            )));
        }
        if !(s.marks.total_mass() > 0.0) {
            return Err(Error::NonpositiveMass(s.marks.total_mass()));
        }
        if s.mark_count == 0 {
            return Err(Error::Invalid("mark count must be at least 1".into()));
        }
        let d = s.dim;
        s.drift = s.drift.bind(Role::Drift, d)?;
        s.diffusion = s.diffusion.bind(Role::Diffusion, d)?;
        s.jump = s.jump.bind(Role::Jump, d)?;
        s.generator = s.generator.bind(Role::Generator, d)?;
        s.cost = s.cost.bind(Role::Cost, d)?;
        s.terminal = s.terminal.bind(Role::Terminal, d)?;
        s.constraint = s.constraint.bind(Role::Constraint, d)?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonpositive_horizon() {
        let err = ModelBuilder::new(1).horizon(-1.0).build();
        assert!(matches!(err, Err(Error::NonpositiveHorizon(_))));
    }

    #[test]
    fn jump_is_mark_bounded() {
        let spec = ModelBuilder::new(1)
            .jump(CoefficientSpec::scaled_mark_shift(1.0))
            .build()
            .unwrap();
        assert_eq!(spec.jump1(42.0, 0.25), 0.25);
    }

    #[test]
    fn impulse_shape() {
        let base = ModelBuilder::new(1).cost(CoefficientSpec::constant(1.0));
        assert!(base.clone().build().unwrap().is_impulse_shape());
        let yz = base
            .clone()
            .cost(CoefficientSpec::affine(vec![0.0, 0.3, 0.0, 0.0, 1.0]))
            .build()
            .unwrap();
        assert!(!yz.is_impulse_shape());
        let h = base
            .constraint(CoefficientSpec::affine(vec![-2.0, 0.0, 0.0]))
            .build()
            .unwrap();
        assert!(!h.is_impulse_shape());
    }
}
