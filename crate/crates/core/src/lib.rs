//! Extrinsic geometric flows on codimension-one foliations.
//!
//! The crate is layered bottom-up:
//! [`symmetric_functions`] and [`companion_matrices`] hold the algebra,
//! [`flow_models`] assembles truncated quasilinear systems,
//! [`hyperbolic_solvers`] integrates them along a normal curve,
//! [`foliated_geometry`] rebuilds metrics and curvature, and
//! [`scenarios`] runs the worked examples end to end.

// `!(v > 0.0)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod companion_matrices;
pub mod error;
pub mod field;
pub mod flow_models;
pub mod foliated_geometry;
pub mod hyperbolic_solvers;
pub mod ode;
pub mod scenarios;
pub mod symmetric_functions;

pub use error::{FlowError, Result};
pub use field::{Boundary, Grid, ScalarField};
