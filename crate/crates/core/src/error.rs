use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the feeder models, solvers and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("not radial: {0}")]
    NotRadial(String),

    #[error("duplicate line for bus {0}")]
    DuplicateLine(String),

    #[error("nonpositive reactance on line into bus {0}")]
    NonpositiveReactance(String),

    #[error("disconnected graph: bus {0} is unreachable from the slack bus")]
    Disconnected(String),

    #[error("cycle detected through bus {0}")]
    Cycle(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("power flow did not converge after {iterations} iterations (last change {last_change:.3e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    #[error("voltage collapse at bus {bus}: squared voltage {v_sq:.4} below floor")]
    VoltageCollapse { bus: usize, v_sq: f64 },

    #[error("cutting-plane budget of {cuts} cuts exhausted (min eigenvalue {min_eig:.3e})")]
    CutBudgetExhausted { cuts: usize, min_eig: f64 },

    #[error("oracle KKT residual {residual:.3e} above threshold after {iterations} iterations")]
    OracleKkt { residual: f64, iterations: usize },

    #[error("grid search requested on {0} buses; at most 3 are supported")]
    GridTooLarge(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid timeline: {0}")]
    Timeline(String),

    #[error("simulation diverged at step {step}: {source}")]
    Diverged {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that come from user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse(_)
                | Error::InvalidCase(_)
                | Error::NotRadial(_)
                | Error::DuplicateLine(_)
                | Error::NonpositiveReactance(_)
                | Error::Disconnected(_)
                | Error::Cycle(_)
                | Error::Dimension { .. }
                | Error::InvalidInput(_)
                | Error::Timeline(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::GridTooLarge(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
