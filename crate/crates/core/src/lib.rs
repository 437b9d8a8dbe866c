//! Charged-sector structure of the infrared-coherent overlap kernel on the
//! Lobachevsky velocity space.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod coherent;
pub mod format;
pub mod geometry;
pub mod kernel;
pub mod quadrature;
pub mod report;
pub mod spectral;
pub mod verify;
