//! Evolving isoparametric finite elements on moving domains.
//!
//! The domain moves with the harmonic extension of a prescribed boundary
//! velocity; a diffusion equation is solved on the moving domain with a
//! linearly implicit BDF method.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod assembly;
pub mod check;
pub mod cli;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod geometry;
pub mod harmonic;
pub mod linsolve;
pub mod mesh;
pub mod ref_elem;

pub use error::{FemError, Result};
pub use mesh::{MeshTopology, NodalVector};

/// Spatial point; the third coordinate is zero in two dimensions.
pub type Point = [f64; 3];
