use thiserror::Error;

use crate::lp::LpError;

/// Errors raised anywhere in the bidding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("reduced susceptance matrix is singular")]
    SingularNetwork,

    #[error("no feasible dispatch: {0}")]
    InfeasibleDispatch(String),

    #[error("dispatch problem is unbounded: {0}")]
    Unbounded(String),

    #[error("total generation is zero; distribution factors undefined")]
    ZeroDispatch,

    #[error("worst-case weights undefined: {0}")]
    DegenerateWeights(String),

    #[error("chance coefficients undefined: denominator {0} is not positive")]
    DegenerateChance(f64),

    #[error("share sensitivity needs a nonzero perturbation")]
    ZeroPerturbation,

    #[error("clearing instance infeasible: {0}")]
    InfeasibleInstance(String),

    #[error("inconsistent FTR bounds for player {player}, path {path}: min {min} > max {max}")]
    InconsistentBounds {
        player: usize,
        path: usize,
        min: f64,
        max: f64,
    },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<LpError> for Error {
    fn from(e: LpError) -> Self {
        Error::Solver(e.to_string())
    }
}

impl Error {
    /// Wraps an error with the name of the pipeline stage that raised it.
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage labels peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
