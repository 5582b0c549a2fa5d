//! Reconstruction of the spatial source `p(x)` in
//! `u_tt = Δu + p(x) h(x, t)` from noisy lateral Cauchy data on the boundary
//! of a square, using a quasi-reversibility least-squares formulation.

pub mod assembly;
pub mod dense;
pub mod error;
pub mod forward;
pub mod grid;
pub mod model;
pub mod pipeline;
pub mod reconstruct;
pub mod regdiff;
pub mod solve;
pub mod source;
pub mod sparse;

pub use error::{IspError, Result};
