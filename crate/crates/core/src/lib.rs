//! Kernel-complexity (KC) edge scoring for node-attributed graphs.
//!
//! The crate is generic over the scalar type; the aliases at the root fix it
//! to `f64` (and `f32` where a cheaper variant is useful).

// `!(x > 0)` is used on purpose so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod io;
pub mod kc_score;
pub mod kernel;
pub mod linalg;
pub mod perturb;
pub mod pseudolabel;
pub mod rng;
pub mod sanitize;
pub mod scalar;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use graph::{canonical, Edge};
pub use kc_score::Method;
pub use pseudolabel::Encoding;
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type Graph = graph::Graph<f64>;
pub type AggregatedFeatures = graph::AggregatedFeatures<f64>;
pub type GramMatrix = kernel::GramMatrix<f64>;
pub type GkcValue = kernel::GkcValue<f64>;
pub type LabelMatrix = pseudolabel::LabelMatrix<f64>;
pub type PseudoLabels = pseudolabel::PseudoLabels<f64>;
pub type KcScoreTable = kc_score::KcScoreTable<f64>;
pub type FastScorer = kc_score::FastScorer<f64>;
pub type TrainConfig = gnn::TrainConfig<f64>;
pub type ModelState = gnn::ModelState<f64>;
pub type TrainTrace = gnn::TrainTrace<f64>;
pub type SpectralPrediction = gnn::SpectralPrediction<f64>;

pub type MatrixF32 = linalg::Matrix<f32>;
pub type GraphF32 = graph::Graph<f32>;
pub type GramMatrixF32 = kernel::GramMatrix<f32>;
pub type KcScoreTableF32 = kc_score::KcScoreTable<f32>;
