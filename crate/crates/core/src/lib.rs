//! Spatial Stark-Zeeman systems and their regularizations.
//!
//! The crate provides the Kustaanheimo-Stiefel (KS) geometry on quaternions,
//! Newtonian and Hamiltonian flows, Moser and KS regularized flows, and a
//! functional on loops of quaternions whose critical points are periodic
//! orbits, collisions included.

pub mod bov;
pub mod cli;
pub mod error;
pub mod flow;
pub mod ksgeom;
pub mod ksham;
pub mod loops;
pub mod moser;
pub mod ode;
pub mod quat;
pub mod reparam;
pub mod spectral;
pub mod systems;

pub use error::{Error, Result};
pub use quat::{PureQuaternion, Quaternion, Vec3};
