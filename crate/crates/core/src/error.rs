//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by graph construction, numerical routines and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("InvolutionBroken at vertex {0}")]
    InvolutionBroken(String),
    #[error("SelfLoop at vertex {0}")]
    SelfLoop(String),
    #[error("DuplicateEdge ({0},{1})")]
    DuplicateEdge(String, String),
    #[error("UnknownVertex {0}")]
    UnknownVertex(String),
    #[error("EdgeClosureBroken ({0},{1}): dual edge missing")]
    EdgeClosureBroken(String, String),
    #[error("WeightAsymmetry ({0},{1})")]
    WeightAsymmetry(String, String),
    #[error("NotStronglyConnected: no path from {0} to {1}")]
    NotStronglyConnected(String, String),
    #[error("NonpositiveWeight ({0},{1})")]
    NonpositiveWeight(String, String),
    #[error("SizeLimit: {0} vertices exceeds cap {1}")]
    SizeLimit(usize, usize),
    #[error("EmptySubspace")]
    EmptySubspace,
    #[error("NotPositiveStable")]
    NotPositiveStable,
    #[error("NotSelfDual: vertex {0} in I but its dual is not")]
    NotSelfDual(usize),
    #[error("MaxIterations after {iterations} steps (gradient norm {gradient_norm:e})")]
    MaxIterations { iterations: usize, gradient_norm: f64 },
    #[error("SingularGenerator")]
    SingularGenerator,
    #[error("NotInDomain")]
    NotInDomain,
    #[error("NotOnManifold: residual {0:e}")]
    NotOnManifold(f64),
    #[error("RootedNeedsEta")]
    RootedNeedsEta,
    #[error("DimensionTooLarge: {0}")]
    DimensionTooLarge(usize),
    #[error("NonConvergence: {0}")]
    NonConvergence(String),
    #[error("QuadratureFailure: {0}")]
    QuadratureFailure(String),
    #[error("UnknownIdentity {0}")]
    UnknownIdentity(String),
    #[error("InstanceTooLarge: {0}")]
    InstanceTooLarge(String),
    #[error("InvalidPath at step {0}")]
    InvalidPath(usize),
    #[error("HorizonTooLarge: event cap {0} reached")]
    HorizonTooLarge(usize),
    #[error("MixingFailure: {0}")]
    MixingFailure(String),
    #[error("NotConverged: tail variation {0:e}")]
    NotConverged(f64),
    #[error("DepthTooLarge: {0}")]
    DepthTooLarge(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
