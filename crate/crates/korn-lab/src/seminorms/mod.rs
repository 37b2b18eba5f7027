//! Discrete fractional seminorms on raster domains: double sums over cell
//! pairs with singular kernels, in plain, direction-projected, truncated,
//! and distance-weighted variants, plus the quadratic statistics needed to
//! project fields onto infinitesimal rigid motions.

mod engine;
mod fields;

pub use engine::{Kind, KernelSpec, PairEngine, RigidGram, DEFAULT_MAX_CELLS};
pub use fields::{
    identity_field, jump_slit_field, random_smooth_field, shear_field, vortex_field,
    DiscreteField,
};
