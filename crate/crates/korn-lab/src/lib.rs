//! Numerical laboratory for fractional Korn inequalities on John and
//! uniform domains.
//!
//! The crate builds raster domains (squares, L-shapes, slit squares, Koch
//! prefractals, cubes), decomposes them into Whitney cubes, grows rooted
//! spanning trees on the cube graph, and evaluates the discrete machinery
//! that a fractional Korn inequality is assembled from:
//!
//! * weighted Hardy and Poincaré inequalities on trees ([`hardy`]),
//! * fractional seminorms — Gagliardo, the deformation-type `X` seminorm,
//!   their truncated and weighted variants ([`seminorms`]),
//! * projections onto infinitesimal rigid motions, locally per smoothened
//!   Whitney cube and globally ([`rigid`]),
//! * Korn quotients and admissibility conditions tying the pieces
//!   together ([`lab`]).
//!
//! Everything is deterministic: identical inputs and seeds produce
//! bit-identical outputs at any thread count.

pub mod error;
pub mod geometry;
pub mod hardy;
pub mod lab;
pub mod rigid;
pub mod seminorms;
pub mod sum;
pub mod tree;
pub mod whitney;

pub use error::{Error, Result};
