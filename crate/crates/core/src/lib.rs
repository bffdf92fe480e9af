//! Variational-circuit simulation with network-generated parameters, plus
//! barren-plateau diagnostics.
//!
//! Numeric code is generic over [`scalar::Real`]; the aliases below fix the
//! double-precision instantiation used by the trainer and the CLI.

pub mod ansatz;
pub mod bp_lab;
pub mod cli_io;
pub mod cost;
pub mod encoding;
pub mod error;
pub mod gradients;
pub mod linalg;
pub mod mlp;
pub mod scalar;
pub mod statevector;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type StateVector = statevector::StateVector<f64>;
pub type StateVectorF32 = statevector::StateVector<f32>;
pub type GateMatrix2 = statevector::GateMatrix2<f64>;
pub type CMatrix = linalg::CMatrix<f64>;
pub type CMatrixF32 = linalg::CMatrix<f32>;
pub type MlpModel = mlp::MlpModel<f64>;
pub type MlpModelF32 = mlp::MlpModel<f32>;
pub type CircuitEvaluator = gradients::CircuitEvaluator<f64>;
pub type CircuitEvaluatorF32 = gradients::CircuitEvaluator<f32>;
