//! Relation extraction over entity-pair bags with a piecewise CNN encoder
//! and ranking-based, cost-sensitive multi-label losses.
//!
//! The model math is generic over the scalar type ([`numeric::Real`],
//! implemented for `f32` and `f64`). Training and gradient checks use the
//! `f64` aliases exported here; checkpoints store `f32`.

pub mod aggregator;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod losses;
pub mod model;
pub mod numeric;
pub mod synth;
pub mod trainer;

pub use error::{CheckpointError, CorpusError, EvalError, ModelError, NumericError};
pub use losses::{LossConfig, LossVariant};
pub use numeric::{Real, SeededRng};

/// Double-precision matrix.
pub type Matrix = numeric::DenseMatrix<f64>;
/// Double-precision model, the training precision.
pub type Model = model::RankingModel<f64>;
/// Single-precision model, the checkpoint storage precision.
pub type Model32 = model::RankingModel<f32>;
pub type EncoderParams = encoder::EncoderParams<f64>;
pub type ModelGrads = model::ModelGrads<f64>;
