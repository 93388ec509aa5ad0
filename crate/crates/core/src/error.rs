use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    /// One or more configuration invariants failed; every violation is listed.
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("z = {z} lies outside the support [{lo}, {hi}]")]
    OutOfSupport { z: f64, lo: f64, hi: f64 },

    #[error("density is not normalizable (total mass {mass})")]
    NonNormalizable { mass: f64 },

    #[error("quadrature with {q} points is too small, need at least {required}")]
    QuadratureTooSmall { q: usize, required: usize },

    #[error("z-derivative order {r} is not representable with K = {k}")]
    DerivativeOrder { r: usize, k: usize },

    #[error("time step {dt} violates the stability bound, try dt <= {suggested}")]
    Cfl { dt: f64, suggested: f64 },

    #[error("non-finite values encountered at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("collocation run at node {node} failed: {source}")]
    Node {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error("decay fit impossible: {0}")]
    Fit(String),

    #[error("nothing to emit")]
    NothingToEmit,

    #[error("I/O failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration parse error: {0}")]
    Parse(String),

    #[error("plot rendering failed: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
