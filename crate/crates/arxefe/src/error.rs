use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the filtering, control and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid parameter {name}: {reason} (got {value})")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
        value: f64,
    },

    #[error("precision matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("precision matrix is numerically singular")]
    SingularPrecision,

    #[error("rate parameter collapsed to {rate} after update: filter diverged")]
    RateCollapse { rate: f64 },

    #[error(
        "shape parameter {alpha} <= 1: predictive variance undefined, belief unusable for control"
    )]
    ShapeTooSmall { alpha: f64 },

    #[error("predictive degrees of freedom {dof} <= 2: variance undefined")]
    UndefinedVariance { dof: f64 },

    #[error("peer index {peer} out of range for {n_agents} agents")]
    PeerOutOfRange { peer: usize, n_agents: usize },

    #[error("agent {agent} lists itself as a peer")]
    SelfCoupling { agent: usize },

    #[error("integration produced a non-finite state: step size too large or inputs invalid")]
    IntegrationDiverged,

    #[error("trial failed at step {step}: {source}")]
    TrialFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("aggregates were produced by configs that differ beyond the coupling mode")]
    ConfigMismatch,

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
