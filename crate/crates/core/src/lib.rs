//! Discrete variational mechanics on Lie groupoids.
//!
//! Backends are the pair groupoid over ℝᵐ, SO(3), and an action groupoid of
//! SO(3) and a torus. On top of them sit first-order discrete mechanics
//! ([`discrete1`]), second-order and constrained problems with stepping and
//! boundary-value solvers ([`second_order`]), discrete optimal control
//! ([`optimal_control`]) and numerical checks of the structural properties
//! of the resulting integrators ([`verify`]).

pub mod cli;
pub mod discrete1;
pub mod error;
pub mod groupoid;
pub mod liealg;
pub mod models;
pub mod newton;
pub mod optimal_control;
pub mod second_order;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
