use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    /// The two signal densities do not share a support.
    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    /// `f̂(x, z) = 0`, so the Bayes update is undefined.
    #[error("degenerate mark z = {z}: mixture density vanishes")]
    DegenerateMark { z: f64 },

    #[error("positivity violation at t = {t}, x = {x}: value {value:e} below floor")]
    Positivity { t: f64, x: f64, value: f64 },

    #[error("bound breach at t = {t}, x = {x}: value {value} outside [{lower}, {upper}]")]
    BoundBreach {
        t: f64,
        x: f64,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("tridiagonal system is singular at row {row}")]
    SolverSingular { row: usize },

    #[error("stability budget exceeded: {0}")]
    Stability(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 for usage/config problems, 2 for numerical diagnostics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::Io(_) | Error::Json(_) => 1,
            Error::SupportMismatch(_)
            | Error::DegenerateMark { .. }
            | Error::Positivity { .. }
            | Error::BoundBreach { .. }
            | Error::SolverSingular { .. }
            | Error::Stability(_) => 2,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
