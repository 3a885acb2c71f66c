use thiserror::Error;

/// Errors raised anywhere in the recovery pipeline.
///
/// Every message is prefixed with the subsystem that produced it so that
/// a failing command line run can be traced without a backtrace.
#[derive(Debug, Error)]
pub enum CrnError {
    /// Malformed input: bad dimensions, out-of-range parameters, unknown
    /// complexes, inconsistent configuration.
    #[error("{module}: {message}")]
    Invalid {
        module: &'static str,
        message: String,
    },

    /// A numerical routine could not deliver a result (step-size underflow,
    /// singular factorization, non-finite values).
    #[error("{module}: numerical failure: {message}")]
    Numerical {
        module: &'static str,
        message: String,
    },

    /// Column filtering left no active complex to build a graph from.
    #[error("graph_recovery: effective model is empty (no column above threshold {tau:e})")]
    EmptyModel { tau: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CrnError>;

impl CrnError {
    pub(crate) fn invalid(module: &'static str, message: impl Into<String>) -> Self {
        CrnError::Invalid {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn numerical(module: &'static str, message: impl Into<String>) -> Self {
        CrnError::Numerical {
            module,
            message: message.into(),
        }
    }

    /// Process exit code used by the command line front end.
    ///
    /// 2 = configuration error, 3 = numerical failure, 4 = empty effective model.
    pub fn exit_code(&self) -> i32 {
        match self {
            CrnError::Invalid { .. } | CrnError::Json(_) | CrnError::Io(_) => 2,
            CrnError::Numerical { .. } => 3,
            CrnError::EmptyModel { .. } => 4,
        }
    }
}
