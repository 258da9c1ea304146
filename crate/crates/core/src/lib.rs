//! Best-response dynamics for monotone variational inequalities on polytopes.
//!
//! [`dynamics::integrate_brd`] drives a state towards a solution of `VI(K, F)`
//! by repeatedly moving towards the linear-programming best response to the
//! current cost. [`analysis`] measures the gap and the input-to-state bounds,
//! and [`scenario`] bundles problems, runs and checks behind JSON files.

pub mod convex_set;
pub mod error;

pub use convex_set::{Polytope, PolytopeSpec};
pub use error::{Error, Result};

pub mod analysis;
pub mod disturbances;
pub mod dynamics;
pub mod export;
pub mod operators;
pub mod plot;
pub mod scenario;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/polytopes.md")]
mod polytopes {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/operators.md")]
mod operators_chapter {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/dynamics.md")]
mod dynamics_chapter {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/disturbances.md")]
mod disturbances_chapter {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/analysis.md")]
mod analysis_chapter {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/scenarios.md")]
mod scenarios_chapter {}
