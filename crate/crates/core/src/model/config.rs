//! Flat `key = value` configuration files.
//!
//! One key per line, `#` starts a comment, blank lines are ignored and any
//! key outside the known set is rejected.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::{CoefficientSpec, Family, MarkMeasureSpec, ModelBuilder, ModelSpec, Role, Slot};
use crate::error::{Error, Result};

const MODEL_KEYS: &[&str] = &[
    "dim",
    "horizon",
    "x0",
    "marks.support",
    "marks.mass",
    "marks.count",
    "marks.density",
    "marks.atoms",
];

/// Keys consumed by the experiment runner rather than the model.
pub const EXPERIMENT_KEYS: &[&str] = &[
    "solvers",
    "n",
    "paths",
    "steps",
    "dx",
    "box",
    "seed",
    "basis",
    "basis.degree",
    "basis.bins",
    "tree.depth",
    "impulses",
    "boundary",
];

fn is_known_key(key: &str) -> bool {
    if MODEL_KEYS.contains(&key) || EXPERIMENT_KEYS.contains(&key) {
        return true;
    }
    match key.split_once('.') {
        Some((prefix, field)) => {
            Role::ALL.iter().any(|r| r.key() == prefix)
                && matches!(field, "family" | "params" | "reads")
        }
        None => false,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (String, usize)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config {
                    line,
                    msg: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = key.trim();
            if !is_known_key(key) {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key `{key}`"),
                });
            }
            if entries
                .insert(key.to_string(), (value.trim().to_string(), line))
                .is_some()
            {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> Result<Config> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    /// Overrides (or adds) a key, e.g. from a command-line flag.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !is_known_key(key) {
            return Err(Error::Config {
                line: 0,
                msg: format!("unknown key `{key}`"),
            });
        }
        self.entries.insert(key.to_string(), (value.into(), 0));
        Ok(())
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.1)
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::Config {
            line: self.line(key),
            msg: format!("{key}: {}", msg.into()),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::MissingKey(key.into()))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| self.err(key, format!("cannot parse `{v}`"))),
        }
    }

    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) if v.trim().is_empty() => Ok(Some(vec![])),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<T>()
                        .map_err(|_| self.err(key, format!("cannot parse `{}`", s.trim())))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

fn coefficient(cfg: &Config, role: Role) -> Result<CoefficientSpec> {
    let p = role.key();
    let fkey = format!("{p}.family");
    let family: Family = cfg.require(&fkey)?.parse().map_err(|e| match e {
        Error::UnknownFamily(name) => Error::Config {
            line: cfg.line(&fkey),
            msg: format!("unknown coefficient family `{name}`"),
        },
        other => other,
    })?;
    let params = cfg
        .parse_list::<f64>(&format!("{p}.params"))?
        .unwrap_or_default();
    let reads = cfg.parse_list::<Slot>(&format!("{p}.reads"))?;
    Ok(CoefficientSpec::new(family, params, reads))
}

/// Builds a [`ModelSpec`] from the model keys of a parsed config.
pub fn build_model(cfg: &Config) -> Result<ModelSpec> {
    let dim: usize = cfg
        .parse_value("dim")?
        .ok_or_else(|| Error::MissingKey("dim".into()))?;
    let horizon: f64 = cfg
        .parse_value("horizon")?
        .ok_or_else(|| Error::MissingKey("horizon".into()))?;
    if !(horizon > 0.0) {
        return Err(Error::NonpositiveHorizon(horizon));
    }
    let x0: Vec<f64> = cfg
        .parse_list("x0")?
        .ok_or_else(|| Error::MissingKey("x0".into()))?;
    let support: Vec<f64> = cfg
        .parse_list("marks.support")?
        .ok_or_else(|| Error::MissingKey("marks.support".into()))?;
    if support.len() != 2 {
        return Err(cfg.err("marks.support", "expected `lo, hi`"));
    }
    let mass: f64 = cfg
        .parse_value("marks.mass")?
        .ok_or_else(|| Error::MissingKey("marks.mass".into()))?;
    if !(mass > 0.0) {
        return Err(Error::NonpositiveMass(mass));
    }
    let count: usize = cfg
        .parse_value("marks.count")?
        .ok_or_else(|| Error::MissingKey("marks.count".into()))?;

    let measure = match cfg.get("marks.density").unwrap_or("uniform") {
        "uniform" => MarkMeasureSpec::uniform(support[0], support[1], mass)?,
        "tabulated" | "atoms" => {
            let raw = cfg.require("marks.atoms")?;
            let atoms = raw
                .split(',')
                .map(|a| {
                    let (e, w) = a
                        .split_once(':')
                        .ok_or_else(|| cfg.err("marks.atoms", "expected `node:weight` pairs"))?;
                    let parse = |s: &str| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| cfg.err("marks.atoms", format!("cannot parse `{s}`")))
                    };
                    Ok((parse(e)?, parse(w)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let m = MarkMeasureSpec::atoms(atoms)?;
            if ((m.total_mass() - mass) / mass).abs() > 1e-12 {
                return Err(cfg.err(
                    "marks.mass",
                    format!("atom weights sum to {}, not {mass}", m.total_mass()),
                ));
            }
            m
        }
        other => return Err(cfg.err("marks.density", format!("unknown density `{other}`"))),
    };

    let mut b = ModelBuilder::new(dim)
        .horizon(horizon)
        .x0(x0)
        .marks(measure, count);
    for role in Role::ALL {
        b = b.coefficient(role, coefficient(cfg, role)?);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
# degenerate catalog entries
dim = 1
horizon = 1
x0 = 0
marks.support = 0, 1
marks.mass = 1
marks.count = 1
b.family = constant
b.params = 0
sigma.family = constant
sigma.params = 1
gamma.family = constant
gamma.params = 0
f.family = constant
f.params = 0
c.family = constant
c.params = 0
g.family = affine
g.params = 1, 0
h.family = negate
";

    #[test]
    fn builds_basic_model() {
        let spec = build_model(&Config::parse(BASIC).unwrap()).unwrap();
        assert_eq!(spec.dim(), 1);
        assert_eq!(spec.terminal(&[2.5]), 2.5);
        assert_eq!(spec.diffusion1(0.0), 1.0);
        assert!(spec.has_obstacle_form());
    }

    #[test]
    fn negative_horizon() {
        let text = BASIC.replace("horizon = 1", "horizon = -1");
        let err = build_model(&Config::parse(&text).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonpositiveHorizon(_)));
        assert!(err.to_string().contains("nonpositive horizon"));
    }

    #[test]
    fn unknown_key_is_hard_error() {
        let text = format!("{BASIC}\nmystery = 4\n");
        match Config::parse(&text) {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 22);
                assert!(msg.contains("mystery"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_family() {
        let text = BASIC.replace("g.family = affine", "g.family = spline");
        let err = build_model(&Config::parse(&text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("spline"));
    }

    #[test]
    fn param_count() {
        let text = BASIC.replace("g.params = 1, 0", "g.params = 1");
        let err = build_model(&Config::parse(&text).unwrap()).unwrap_err();
        assert!(matches!(err, Error::ParamCount { .. }));
    }

    #[test]
    fn tabulated_atoms() {
        let text = BASIC.replace(
            "marks.count = 1",
            "marks.count = 1\nmarks.density = tabulated\nmarks.atoms = 0.3:1.0",
        );
        let spec = build_model(&Config::parse(&text).unwrap()).unwrap();
        let ms = spec.mark_space().unwrap();
        assert_eq!(ms.nodes(), &[0.3]);
    }

    #[test]
    fn missing_key() {
        let text = BASIC.replace("h.family = negate\n", "");
        assert!(matches!(
            build_model(&Config::parse(&text).unwrap()),
            Err(Error::MissingKey(_))
        ));
    }
}
