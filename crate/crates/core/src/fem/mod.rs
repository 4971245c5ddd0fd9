//! Reference-element machinery for the P1, P1-bubble and MINI spaces.

mod basis;
mod dofmap;
mod field;
mod quadrature;

pub(crate) use basis::eval_unchecked;
pub use basis::{eval_basis, ElementMap, LocalBasis, SpaceKind};
pub use dofmap::DofMap;
pub use field::{
    eval_in_cell, h1_error, h1_seminorm, integral, interpolate, interpolate_scalar, l2_error, l2_norm, vertex_values,
};
pub use quadrature::{quad_rule, QuadRule, DEFAULT_DEGREE};
