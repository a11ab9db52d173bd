use thiserror::Error;

/// Errors raised by the spectral calculus, the test pipeline and the simulation lab.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {z} lies within {tol:e} of a sample eigenvalue")]
    PoleProximity { z: String, tol: f64 },

    #[error("companion transform denominator vanishes at {z}")]
    DegenerateDenominator { z: String },

    #[error("non-positive variance estimate {0:e}")]
    NonPositiveVariance(f64),

    #[error("classical inverse applied to a spectrum containing zero")]
    SingularSpectrum,

    #[error("roots {0} and {1} are not separated")]
    RootMultiplicity(f64, f64),

    #[error("contour violation: {0}")]
    ContourViolation(String),

    #[error("contour integral has imaginary residue {imag:e} (real part {real:e})")]
    NonRealResult { real: f64, imag: f64 },

    #[error("the classical inverse has no asymptotic standardization")]
    UnsupportedStandardization,

    #[error("design matrix X is rank deficient")]
    RankDeficientDesign,

    #[error("constraint matrix C is rank deficient")]
    RankDeficientConstraints,

    #[error("eigenvalue {0} of M(f) is not above -1")]
    DomainError(f64),

    #[error("matrix T is singular")]
    SingularT,

    #[error("sample spectrum is identically zero")]
    ZeroSpectrum,

    #[error("kernel matrix of the root triple is singular")]
    SingularD,

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid prior weights: {0}")]
    InvalidPrior(String),

    #[error("invalid shrinkage: {0}")]
    InvalidShrinkage(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures caused by the numbers rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::PoleProximity { .. }
                | Error::DegenerateDenominator { .. }
                | Error::NonPositiveVariance(_)
                | Error::SingularSpectrum
                | Error::NonRealResult { .. }
                | Error::DomainError(_)
                | Error::SingularT
                | Error::ZeroSpectrum
                | Error::SingularD
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
