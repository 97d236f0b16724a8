//! Sampled falsification of the standing assumptions on the coefficients.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MarkDensity, ModelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Headline number of the check (estimated constant, bound or ratio).
    pub value: f64,
    /// Worst sampled point, when one exists.
    pub witness: Option<Vec<f64>>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Sampled Lipschitz constant of `u -> h(u, e)`.
    pub fn constraint_lipschitz(&self) -> f64 {
        self.get("constraint-monotone")
            .map_or(f64::NAN, |c| c.value)
    }
}

const SMALL: f64 = 10.0;
const LARGE: f64 = 1e4;
/// Growth at the large scale may exceed the small-scale growth by this factor.
const GROWTH_SLACK: f64 = 10.0;

struct Sampler<'a> {
    rng: ChaCha8Rng,
    spec: &'a ModelSpec,
    atoms: Option<Vec<f64>>,
}

impl Sampler<'_> {
    fn uniform(&mut self, r: f64) -> f64 {
        (2.0 * self.rng.random::<f64>() - 1.0) * r
    }

    fn vec(&mut self, r: f64) -> Vec<f64> {
        (0..self.spec.dim()).map(|_| self.uniform(r)).collect()
    }

    fn mark(&mut self) -> f64 {
        match &self.atoms {
            Some(nodes) => nodes[self.rng.random_range(0..nodes.len())],
            None => {
                let (lo, hi) = self.spec.marks().support;
                lo + (hi - lo) * self.rng.random::<f64>()
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Runs every check on `samples` random points; deterministic in `seed`.
pub fn validate_model(spec: &ModelSpec, samples: usize, seed: u64) -> ValidationReport {
    let atoms = match &spec.marks().density {
        MarkDensity::Atoms(a) => Some(a.iter().map(|p| p.0).collect()),
        MarkDensity::Uniform => None,
    };
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
        spec,
        atoms,
    };
    let samples = samples.max(1);
    let d = spec.dim();

    let mut checks = Vec::new();

    // h nonincreasing in u
    let mut kh = 0.0f64;
    let mut violation: Option<Vec<f64>> = None;
    let mut worst = 0.0;
    for _ in 0..samples {
        let e = s.mark();
        let (a, b) = (s.uniform(SMALL), s.uniform(SMALL));
        let (u1, u2) = if a <= b { (a, b) } else { (b, a) };
        if u1 == u2 {
            continue;
        }
        let (h1, h2) = (spec.constraint(u1, e), spec.constraint(u2, e));
        kh = kh.max((h2 - h1).abs() / (u2 - u1));
        let rise = h2 - h1;
        if rise > 1e-12 * (1.0 + h1.abs()) && rise > worst {
            worst = rise;
            violation = Some(vec![u1, u2, e]);
        }
    }
    checks.push(Check {
        name: "constraint-monotone",
        passed: violation.is_none(),
        value: kh,
        detail: match &violation {
            Some(w) => format!(
                "h({}, {}) < h({}, {}): increasing in u",
                w[0], w[2], w[1], w[2]
            ),
            None => format!("nonincreasing on {samples} pairs, Lipschitz estimate {kh}"),
        },
        witness: violation,
    });

    // sup_e |gamma(x, e)| uniformly bounded in x
    let mut out = vec![0.0; d];
    let mut sup = [0.0f64; 2];
    let mut witness = None;
    for (scale_idx, scale) in [SMALL, LARGE].into_iter().enumerate() {
        for _ in 0..samples {
            let x = s.vec(scale);
            let e = s.mark();
            spec.jump(&x, e, &mut out);
            let g = norm(&out);
            if g > sup[scale_idx] {
                sup[scale_idx] = g;
                if scale_idx == 1 {
                    let mut w = x.clone();
                    w.push(e);
                    witness = Some(w);
                }
            }
        }
    }
    let jump_ok = sup[1] <= GROWTH_SLACK * sup[0] + 1e-9;
    checks.push(Check {
        name: "jump-bound",
        passed: jump_ok,
        value: sup[0].max(sup[1]),
        witness,
        detail: format!(
            "sup |gamma| = {} for |x| <= {SMALL}, {} for |x| <= {LARGE}",
            sup[0], sup[1]
        ),
    });

    // sublinear growth of g, f, c
    type Eval<'a> = Box<dyn Fn(&[f64], f64, &[f64], f64) -> f64 + 'a>;
    let growth: [(&'static str, Eval, bool); 3] = [
        (
            "terminal-growth",
            Box::new(|x: &[f64], _, _: &[f64], _| spec.terminal(x)),
            false,
        ),
        (
            "generator-growth",
            Box::new(|x: &[f64], y, z: &[f64], _| spec.generator(x, y, z)),
            true,
        ),
        (
            "cost-growth",
            Box::new(|x: &[f64], y, z: &[f64], e| spec.cost(x, y, z, e)),
            true,
        ),
    ];
    for (name, eval, reads_yz) in growth {
        let mut ratio = [0.0f64; 2];
        let mut witness = None;
        for (scale_idx, scale) in [SMALL, LARGE].into_iter().enumerate() {
            for _ in 0..samples {
                let x = s.vec(scale);
                let (y, z) = if reads_yz {
                    (s.uniform(scale), s.vec(scale))
                } else {
                    (0.0, vec![0.0; d])
                };
                let e = s.mark();
                let r = eval(&x, y, &z, e).abs() / (1.0 + norm(&x) + y.abs() + norm(&z));
                if r > ratio[scale_idx] {
                    ratio[scale_idx] = r;
                    if scale_idx == 1 {
                        let mut w = x;
                        if reads_yz {
                            w.push(y);
                            w.extend(z);
                        }
                        witness = Some(w);
                    }
                }
            }
        }
        checks.push(Check {
            name,
            passed: ratio[1] <= GROWTH_SLACK * ratio[0] + 1e-9,
            value: ratio[0].max(ratio[1]),
            witness,
            detail: format!(
                "max |phi| / (1 + |x| + |y| + |z|) = {} at scale {SMALL}, {} at scale {LARGE}",
                ratio[0], ratio[1]
            ),
        });
    }

    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientSpec, ModelBuilder};

    #[test]
    fn negated_constraint_passes_with_unit_lipschitz() {
        let spec = ModelBuilder::new(1).build().unwrap();
        let r = validate_model(&spec, 500, 1);
        let c = r.get("constraint-monotone").unwrap();
        assert!(c.passed);
        assert!((r.constraint_lipschitz() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn increasing_constraint_fails_with_witness() {
        let spec = ModelBuilder::new(1)
            .constraint(CoefficientSpec::affine(vec![1.0, 0.0, 0.0]))
            .build()
            .unwrap();
        let r = validate_model(&spec, 500, 1);
        let c = r.get("constraint-monotone").unwrap();
        assert!(!c.passed);
        let w = c.witness.as_ref().unwrap();
        assert!(w[0] < w[1]);
        assert!(spec.constraint(w[1], w[2]) > spec.constraint(w[0], w[2]));
    }

    #[test]
    fn mark_jump_bounded_by_one() {
        let spec = ModelBuilder::new(1)
            .jump(CoefficientSpec::scaled_mark_shift(1.0))
            .build()
            .unwrap();
        let r = validate_model(&spec, 2000, 3);
        let c = r.get("jump-bound").unwrap();
        assert!(c.passed);
        assert!(c.value <= 1.0 && c.value > 0.99);
    }

    #[test]
    fn state_proportional_jump_fails() {
        let spec = ModelBuilder::new(1)
            .jump(CoefficientSpec::affine(vec![1.0, 0.0, 0.0]))
            .build()
            .unwrap();
        assert!(
            !validate_model(&spec, 500, 3)
                .get("jump-bound")
                .unwrap()
                .passed
        );
    }

    #[test]
    fn quadratic_terminal_fails_growth() {
        let spec = ModelBuilder::new(1)
            .terminal(CoefficientSpec::quadratic(1.0, 0.0, 0.0))
            .build()
            .unwrap();
        let r = validate_model(&spec, 500, 3);
        assert!(!r.get("terminal-growth").unwrap().passed);
        assert!(r.get("cost-growth").unwrap().passed);
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = ModelBuilder::new(2)
            .terminal(CoefficientSpec::positive_part(1.0, 0.0))
            .build()
            .unwrap();
        assert_eq!(validate_model(&spec, 300, 9), validate_model(&spec, 300, 9));
    }
}
