//! Grand-canonical Kac model: an open one-dimensional gas with Maxwellian
//! particle exchange and Kac collisions, plus deterministic and spectral
//! companions of the stochastic dynamics.

// Validation uses `!(x > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bk;
pub mod config;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod model;
pub mod number_chain;
pub mod quadrature;
pub mod simulator;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use error::{KacError, Result};
pub use model::{ModelParams, ParticleState, VelocityLaw};
