use std::path::PathBuf;

use thiserror::Error;

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent input data.
    Input,
    /// A numerical routine failed (ill-conditioning, divergence, non-convergence).
    Numeric,
    /// The requested configuration cannot be satisfied.
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("node index {index} out of range for a graph with {n_nodes} nodes")]
    NodeOutOfRange { index: usize, n_nodes: usize },
    #[error("edge ({u}, {v}) is not in the graph")]
    MissingEdge { u: usize, v: usize },
    #[error("self-loop ({0}, {0}) is implicit and cannot be addressed as an edge")]
    SelfLoop(usize),
    #[error("aggregated feature row of node {node} vanishes (norm {norm:e})")]
    DegenerateFeature { node: usize, norm: f64 },
    #[error("cannot form {k} clusters from {n} nodes")]
    InfeasibleK { k: usize, n: usize },
    #[error("only {distinct} distinct feature rows, fewer than the {k} requested clusters")]
    DegenerateClustering { k: usize, distinct: usize },
    #[error("label encoding error: {0}")]
    Encoding(String),
    #[error("label {value} at node {node} violates |y| <= 1")]
    UnboundedLabel { node: usize, value: f64 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    IllConditioned { residual: f64, tolerance: f64 },
    #[error("Cholesky factorization failed even after adding ridge {ridge:e}")]
    NotPositiveDefinite { ridge: f64 },
    #[error("symmetric eigensolver did not converge")]
    EigenNoConvergence,
    #[error("graph has no edges to score")]
    NoEdges,
    #[error("edge ({u}, {v}): {source}")]
    AtEdge {
        u: usize,
        v: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("prune plan is stale: edge ({u}, {v}) is not in the graph")]
    StalePlan { u: usize, v: usize },
    #[error("perturbation budget infeasible: {0}")]
    Budget(String),
    #[error("loss became non-finite at step {step}; the step size is too large")]
    Divergence { step: usize },
    #[error("class {class} has no node in the training split")]
    DegenerateSplit { class: usize },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::NodeOutOfRange { .. }
            | Error::MissingEdge { .. }
            | Error::SelfLoop(_)
            | Error::UnboundedLabel { .. }
            | Error::Shape { .. }
            | Error::StalePlan { .. } => ErrorKind::Input,
            Error::DegenerateFeature { .. }
            | Error::IllConditioned { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::EigenNoConvergence
            | Error::Divergence { .. } => ErrorKind::Numeric,
            Error::InfeasibleK { .. }
            | Error::DegenerateClustering { .. }
            | Error::Encoding(_)
            | Error::NoEdges
            | Error::Config(_)
            | Error::Budget(_)
            | Error::DegenerateSplit { .. } => ErrorKind::Config,
            Error::AtEdge { source, .. } => source.kind(),
        }
    }

    pub(crate) fn at_edge(self, u: usize, v: usize) -> Error {
        match self {
            e @ Error::AtEdge { .. } => e,
            e => Error::AtEdge {
                u,
                v,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
