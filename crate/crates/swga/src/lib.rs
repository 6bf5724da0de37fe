//! Global stochastic optimal control of attitude kinematics on SO(3).
//!
//! The crate assembles the pieces of a successive Wigner-Galerkin
//! approximation: harmonic analysis in the Wigner-D basis, analytic Galerkin
//! matrix assembly from closed-form Haar integrals, policy iteration for the
//! resulting stochastic Hamilton-Jacobi-Bellman system, and a geometric SDE
//! simulator for Monte-Carlo validation of the synthesized feedback laws.

pub mod assembly;
pub mod error;
pub mod integrals;
pub mod sim;
pub mod so3;
pub mod solver;
pub mod verify;
pub mod wigner;

pub use error::{Error, Result};
