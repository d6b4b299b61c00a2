//! Monge transport on finite geodesic metric measure spaces by
//! decomposition into transport rays.
//!
//! The pipeline solves the Kantorovich problem for distance cost, extracts
//! a 1-Lipschitz potential, builds the set of pairs it saturates, splits the
//! moved region into one-dimensional rays, solves each ray by monotone
//! rearrangement and glues the pieces back into a transport on the space.
//! Verification tools cover duality gaps, cyclical monotonicity, the
//! measure contraction inequality and density bounds along rays.

pub mod curvature;
pub mod disintegration;
pub mod error;
pub mod io;
pub mod kantorovich;
pub mod mmspace;
pub mod monge;
pub mod oned;
pub mod rays;
pub mod selftest;

pub use error::{Error, Result};
