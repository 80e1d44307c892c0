//! Learning generalized potentials of stationary Fokker-Planck equations with
//! a residual loss and an annealed negative gradient penalty (IGANN).
//!
//! The network, systems, loss, sampling and trainer are generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix `f64`. The
//! finite-difference reference and the metrics are `f64` only.

pub mod error;
pub mod eval;
pub mod fdm;
pub mod loss;
pub mod network;
pub mod sampling;
pub mod scalar;
pub mod systems;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Network = network::FieldNetwork<f64>;
pub type FieldEval = network::FieldEval<f64>;
pub type ResidualTerms = loss::ResidualTerms<f64>;
pub type LossTerms = loss::LossTerms<f64>;
pub type TrainOutcome = train::TrainOutcome<f64>;
