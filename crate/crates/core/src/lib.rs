//! Global conformal and quasi-conformal parameterization of multiply-connected triangle meshes
//! onto circular domains, by partitioning, free-boundary flattening, partial welding and Koebe
//! iteration.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assemble;
pub mod cli;
pub mod fixtures;
pub mod flatten;
pub mod geometry;
pub mod koebe;
pub mod mesh;
pub mod pipeline;
pub mod snapshot;
pub mod sparse;
pub mod welding;

pub use num_complex::Complex64;
