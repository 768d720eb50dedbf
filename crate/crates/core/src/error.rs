use thiserror::Error;

/// Errors produced while building games, graphs and scenarios or while
/// integrating the seeking dynamics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("player index {index} out of range for a game with {players} players")]
    IndexOutOfRange { index: usize, players: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid game: {0}")]
    InvalidGame(String),

    /// The symmetrized pseudo-gradient matrix is not positive definite.
    #[error("mu <= 0 (strong monotonicity violated, mu = {mu:.6e})")]
    NotMonotone { mu: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph disconnected")]
    GraphDisconnected,

    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive edge gain below the threshold that makes the Lyapunov
    /// matrix positive definite.
    #[error("threshold violation: omega* = {omega_star:.6e} <= omega_bar = {omega_bar:.6e} (lambda_min = {lambda_min:.6e})")]
    Threshold {
        omega_star: f64,
        omega_bar: f64,
        lambda_min: f64,
    },

    #[error("no active-set pattern satisfies the KKT conditions (best residual {best_residual:.3e})")]
    NoKktPattern { best_residual: f64 },

    #[error("projected iteration did not converge after {iters} iterations (last step {residual:.3e})")]
    NotConverged { iters: usize, residual: f64 },

    #[error("non-finite state at sample {sample} (s = {s:.6e})")]
    NonFinite { sample: usize, s: f64 },

    #[error("integrator step size underflow at s = {s:.6e}")]
    StepUnderflow { s: f64 },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Failures of the numerical integration itself, as opposed to invalid
    /// input.
    pub fn is_integrator_failure(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::StepUnderflow { .. })
    }
}
