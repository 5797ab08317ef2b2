use thiserror::Error;

/// Errors raised by the propagator engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("time ordering violated: t_f = {t_f} must exceed t_i = {t_i}")]
    TimeOrdering { t_i: f64, t_f: f64 },

    #[error("caustic: omega*T = {omega_t} outside (0, pi)")]
    Caustic { omega_t: f64 },

    #[error("singular Gaussian chain (discrete caustic)")]
    SingularChain,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate quadratic coefficient a = 0")]
    DegenerateQuadratic,

    #[error("divergent Gaussian integral: Im(a) = {0} < 0")]
    Divergent(f64),

    #[error("degenerate slice time s = {s} for total time {t}")]
    DegenerateSlice { s: f64, t: f64 },

    #[error("grid resolution: {0}")]
    GridResolution(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("linear solve failed: zero pivot at row {0}")]
    LinearSolve(usize),
}

impl Error {
    /// True for errors caused by invalid input rather than by numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_) | Error::TimeOrdering { .. } | Error::InsufficientData { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
