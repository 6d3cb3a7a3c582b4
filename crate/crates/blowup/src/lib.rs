//! Numerics for concentrating solutions of the half-Laplacian Liouville
//! problem on unions of intervals.

pub mod ansatz;
pub mod cli;
pub mod domain;
pub mod error;
pub mod fracops;
pub mod greens;
pub mod quad;
pub mod reduced;
pub mod reduction;
pub mod verify;

pub use domain::{ConfigPoint, Closure, Grid, GridFunction, IntervalUnion, KappaField};
pub use error::{Error, Result};
pub use fracops::{circle_halflap, eval_halflap, solve_dirichlet, DirichletSystem, PvQuadrature};
