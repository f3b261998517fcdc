//! Local metric perturbations that push intersecting geodesics apart.
//!
//! Given a metric on a chart and geodesic segments crossing at a point, the
//! crate builds tubular coordinates around each segment, a family of metrics
//! `g^(s)` that agrees with `g` away from two small shells, and the displaced
//! geodesics `c_s`, together with the numerical checks that certify each step.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bump_perturb;
pub mod chart_metric;
pub mod closed_geo;
pub mod error;
pub mod geodesic_flow;
pub mod harness;
pub mod intersect;
pub mod linalg;
pub mod tubular;

pub use error::{Error, Result};
