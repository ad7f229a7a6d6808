//! Stochastic approximation of differential inclusions.
//!
//! Simulation of the recursion `x_{i+1} ∈ x_i + ε_i H^{δ_i}(x_i) + ε_i η_{i+1}`
//! for set-valued maps with polytope values, together with occupation-measure
//! diagnostics, Euler integration of `x' ∈ H(x)`, normal-form games and an
//! experiment runner.

pub mod engine;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod games;
pub mod geometry;
pub mod linalg;
pub mod occupation;
pub mod setvalued;
pub mod testfn;

pub use error::{Error, Result};
pub use geometry::Polytope;
pub use setvalued::{SelectionRule, SetValuedMap};
