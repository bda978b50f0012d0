use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilmError {
    #[error("degenerate parametrization: {detail}")]
    DegenerateParametrization { detail: String },

    #[error("coordinate Jacobian is singular (condition number {cond:e})")]
    SingularJacobian { cond: f64 },

    #[error("truncation order {requested} is too low, at least {required} is needed")]
    TruncationTooLow { requested: usize, required: usize },

    #[error("truncation order {requested} exceeds the supported maximum {max}")]
    TruncationTooHigh { requested: usize, max: usize },

    #[error("gap thickness {h:e} at node ({i}, {j}) is below the floor {floor:e}")]
    NonPositiveGap { h: f64, floor: f64, i: usize, j: usize },

    #[error("diffusion weight is not positive definite at node ({i}, {j})")]
    NonSpdWeight { i: usize, j: usize },

    #[error("linear solver failed: {detail}")]
    SolverDivergence { detail: String },

    #[error("time step {dt:e} exceeds the CFL limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("epsilon {eps:e} is below the supported minimum 1e-4")]
    EpsilonTooSmall { eps: f64 },

    #[error("friction is enabled but no friction law was supplied")]
    MissingFriction,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration at `{path}`: {reason}")]
    ConfigInvalid { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FilmError {
    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        FilmError::ConfigInvalid { path: path.into(), reason: reason.into() }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            FilmError::ConfigInvalid { .. } | FilmError::Json(_) | FilmError::InvalidGrid(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, FilmError>;
