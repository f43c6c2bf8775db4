//! Rigid and as-rigid-as-possible surface registration.
//!
//! Every iteration freezes the closest-point projections of the current
//! iterate, linearizes the rotations (`R ≈ I + [r]×`) and solves one sparse
//! symmetric linear system for the motion and the new point positions
//! jointly: `6 + 3N` unknowns for rigid ICP, `6 + 6N` once per-vertex local
//! rotations are added. An optional point-to-plane term sharpens the normal
//! direction of the fit.
//!
//! The crate is `no_std` (with `alloc`). The `std` feature only enables
//! wall-clock timing of factorizations.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod arap;
pub mod energy;
mod error;
pub mod geom;
pub mod mesh;
pub mod rigid;
pub mod spatial;
pub mod synth;
pub mod system;

pub use error::{Error, Result};
pub use geom::{Matrix3, Point3, RigidTransform, SmallMotion, Vec3};
pub use mesh::Mesh;
