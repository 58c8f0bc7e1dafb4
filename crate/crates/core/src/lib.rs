//! Molecular dynamics of a 1D silicon chain with one copper impurity, and
//! its zero-temperature optimal-prediction reduction.
//!
//! The numerical kernels are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the double-precision types used by the ensemble and
//! analysis layers.

pub mod analysis;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod model;
pub mod potential;
pub mod quadrature;
pub mod reduction;
pub mod scalar;
pub mod units;

pub use error::{Error, Result};
pub use model::{ChainModel, ModelParams, Species};
pub use potential::{PairEval, PairKind, PairPotential};
pub use scalar::Real;
pub use units::UnitSystem;

pub type Model = ChainModel<f64>;
pub type Model32 = ChainModel<f32>;
