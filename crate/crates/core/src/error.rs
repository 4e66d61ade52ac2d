use thiserror::Error;

pub type Result<T> = std::result::Result<T, QestError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QestError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("operator is not Hermitian (max deviation {deviation:.3e}, tolerance {tolerance:.1e})")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("trace is {trace:.12} but must be 1 within {tolerance:.1e}")]
    TraceNotUnit { trace: f64, tolerance: f64 },

    #[error("state is not positive semidefinite: minimum eigenvalue {min_eigenvalue:.3e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("state vector norm {norm:.12} differs from 1")]
    NotNormalized { norm: f64 },

    #[error("expectation value has non-negligible imaginary part {imag:.3e}")]
    ComplexExpectation { imag: f64 },

    #[error("trace {trace:.3e} too small to normalize (integrator blow-up?)")]
    DegenerateTrace { trace: f64 },

    #[error("measurement outcome {outcome} lies too far in the Gaussian tails (numerator trace underflowed)")]
    OutcomeUnderflow { outcome: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error(
        "positivity violated at t={t:.6}: minimum eigenvalue {min_eigenvalue:.3e} \
         (abort threshold {threshold:.1e}); try dt <= {suggested_dt:.3e}"
    )]
    PositivityViolation {
        t: f64,
        min_eigenvalue: f64,
        threshold: f64,
        suggested_dt: f64,
    },

    #[error("stochastic Schrodinger equation requires unit efficiency, channel {channel} has eta={eta}")]
    SseRequiresUnitEfficiency { channel: usize, eta: f64 },

    #[error("not enough trajectories: need at least {needed}, got {got}")]
    InsufficientTrajectories { needed: usize, got: usize },

    #[error("mismatched scenarios: {0}")]
    MismatchedScenarios(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl QestError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        QestError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        QestError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for QestError {
    fn from(e: std::io::Error) -> Self {
        QestError::Io(e.to_string())
    }
}
