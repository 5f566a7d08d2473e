use crate::model::FieldState;

/// Errors raised by the solver, the diagnostics and the experiment driver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation error at node {node} (r = {r}): {what}")]
    Evaluation { node: usize, r: f64, what: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The scheme produced a state outside the admissible set. The offending
    /// state is kept for post-mortem inspection.
    #[error("scheme failure at t = {t}: {reason}")]
    SchemeFailure {
        t: f64,
        reason: String,
        state: Box<FieldState>,
    },

    #[error("probe error: {0}")]
    Probe(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<S: Into<String>>(msg: S) -> Error {
    Error::Config(msg.into())
}
