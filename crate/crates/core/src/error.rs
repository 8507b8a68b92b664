use thiserror::Error;

/// Errors raised by the association tests and their calibration routes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design matrix is rank deficient (condition number of XᵀX = {condition:e})")]
    SingularDesign { condition: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e} below clip threshold {threshold:e})")]
    NotPsd { eigenvalue: f64, threshold: f64 },

    #[error("residual trace {denominator:e} is degenerate relative to total trace {total:e}")]
    DegenerateResidual { denominator: f64, total: f64 },

    #[error("centered similarity matrix has no positive eigenvalue")]
    DegenerateSpectrum,

    #[error("sample covariance of the predictors is singular")]
    SingularCovariance,

    #[error("invalid cumulants: {0}")]
    InvalidCumulants(String),

    #[error("generalized gamma fit did not converge after {iterations} iterations (residual {residual:e})")]
    GammaFitFailed { iterations: usize, residual: f64 },

    #[error("invalid correlation model: {0}")]
    InvalidCorrelation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short machine-readable tag, used in CLI error objects and warnings.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::SingularDesign { .. } => "SingularDesign",
            Error::NotPsd { .. } => "NotPSD",
            Error::DegenerateResidual { .. } => "DegenerateResidual",
            Error::DegenerateSpectrum => "DegenerateSpectrum",
            Error::SingularCovariance => "SingularCovariance",
            Error::InvalidCumulants(_) => "InvalidCumulants",
            Error::GammaFitFailed { .. } => "GammaFitFailed",
            Error::InvalidCorrelation(_) => "InvalidCorrelation",
            Error::Io(_) => "Io",
        }
    }

    /// Process exit status: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::InvalidCorrelation(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
