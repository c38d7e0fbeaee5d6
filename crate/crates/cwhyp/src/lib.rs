//! cwhyp — a desk-scale computational laboratory for continuum-wise
//! hyperbolic dynamics.
//!
//! The crate implements, for hyperbolic toral automorphisms, their sine
//! perturbation family, and the induced quotient-sphere (pillowcase)
//! homeomorphisms:
//!
//! * quotient spaces and metrics ([`spaces`]), the map family ([`systems`]);
//! * polyline continua with marked points and their iteration ([`continua`]);
//! * the expansion-time metric machinery on continua ([`cwmetric`]);
//! * local stable/unstable leaf continua and their intersections
//!   ([`foliation`]);
//! * constructive pseudo-orbit shadowing with a closed-form linear oracle and
//!   a periodic-point census ([`shadowing`]);
//! * a numerically solved semiconjugacy to the linear model ([`conjugacy`]);
//! * intersection-count certificates and product-system analysis
//!   ([`analyzer`]);
//! * experiment orchestration, JSON artifacts, and SVG figures ([`artifact`],
//!   [`svg`]).

pub mod analyzer;
pub mod artifact;
pub mod conjugacy;
pub mod continua;
pub mod cwmetric;
mod error;
pub mod foliation;
pub mod shadowing;
pub mod spaces;
pub mod svg;
pub mod systems;

pub use error::{Error, Result};
