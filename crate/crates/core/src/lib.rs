//! State-space neural tangent kernels (sNTK) of discrete-time dynamical models.
//!
//! The crate covers four layers:
//!
//! - [`normal_forms`]: scalar normal-form maps, their parameter sensitivities and
//!   the rank-one kernel norm they induce.
//! - [`rnn`]: the autonomous tanh RNN `h_{t+1} = W tanh(h_t) + b`, trajectory
//!   simulation, the readout loss and its exact BPTT gradient, fixed-point
//!   planting and spectral measurements.
//! - [`sntk`]: the parameter-to-state Jacobian by forward sensitivity, matrix-free
//!   Jacobian products, Fisher/sNTK spectra, the rank-one decomposition along a
//!   parameter direction and local amplification landscapes.
//! - [`train`]: SGD and rank-one natural-gradient student-teacher training with
//!   per-iteration telemetry and bifurcation detection.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below name the double-precision instantiations used by the tools.

pub mod error;
pub mod linalg;
pub mod normal_forms;
pub mod rnn;
pub mod scalar;
pub mod sntk;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ScalarNormalForm64 = normal_forms::ScalarNormalForm<f64>;
pub type RnnModel64 = rnn::RnnModel<f64>;
pub type RnnModel32 = rnn::RnnModel<f32>;
pub type TrajectoryBatch64 = rnn::TrajectoryBatch<f64>;
pub type ParamVector64 = rnn::ParamVector<f64>;
pub type StateJacobian64 = sntk::StateJacobian<f64>;
pub type SntkSummary64 = sntk::SntkSummary<f64>;
pub type TrainConfig64 = train::TrainConfig<f64>;
pub type MetricsRecord64 = train::MetricsRecord<f64>;
