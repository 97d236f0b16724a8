//! Minimal solutions of backward SDEs with constrained jumps.
//!
//! The crate approximates the minimal solution by a sequence of penalized
//! BSDEs solved with a backward regression Monte Carlo scheme
//! ([`penalized`]), and checks the results against three independent
//! oracles in one space dimension:
//!
//! * monotone explicit finite differences for the penalized integro-PDE and
//!   the limiting quasi-variational inequality ([`qvi`]),
//! * intensity-controlled dynamic programming and brute-force tree
//!   enumeration of the dual representation ([`dual`]),
//! * iterated optimal stopping ([`qvi::iterated_optimal_stopping`]).
//!
//! Every solver reads the same immutable [`ModelSpec`] and [`MarkSpace`].

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dual;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod grid;
pub mod model;
pub mod penalized;
pub mod qvi;
pub mod regression;

pub use error::{Error, Result};
pub use forward::{simulate_paths, PathBundle, TimeGrid};
pub use grid::{SpaceGrid, ValueGrid};
pub use model::{
    discretize_marks, CoefficientSpec, Family, MarkMeasureSpec, MarkSpace, ModelBuilder, ModelSpec,
};
pub use penalized::{penalization_sweep, solve_penalized, PenalizedSolution, SweepTable};
pub use regression::RegressionBasis;
