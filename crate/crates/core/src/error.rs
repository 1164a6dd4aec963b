use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` must be {requirement}, got {value}")]
    NonPositiveParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    #[error("stability condition a*c < b*(c+d) violated: a*c = {ac}, b*(c+d) = {bcd}")]
    StabilityViolation { ac: f64, bcd: f64 },

    #[error("argument {value} is outside the domain of {function}: {reason}")]
    Domain {
        function: &'static str,
        value: f64,
        reason: String,
    },

    #[error("horizon must be a finite non-negative number, got {0}")]
    HorizonNonPositive(f64),

    #[error("grid point {point} is outside [0, {horizon}] or the grid is not increasing")]
    GridOutOfRange { point: f64, horizon: f64 },

    #[error("ODE step size fell below {h_min:e} at t = {t} with error ratio {err:e}")]
    StepSizeRejected { t: f64, h_min: f64, err: f64 },

    #[error("quadrature on [{a}, {b}] did not reach tolerance (estimated error {err:e})")]
    QuadratureFailed { a: f64, b: f64, err: f64 },

    #[error("cluster exceeded {limit} nodes; parameters are probably not subcritical")]
    ClusterOverflow { limit: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unsupported price model `{0}`")]
    UnsupportedKind(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad input rather than by a failure while
    /// running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveParameter { .. }
                | Error::StabilityViolation { .. }
                | Error::Domain { .. }
                | Error::HorizonNonPositive(_)
                | Error::GridOutOfRange { .. }
                | Error::UnsupportedKind(_)
                | Error::InvalidArgument(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
