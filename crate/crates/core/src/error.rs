use thiserror::Error;

/// Errors raised anywhere in the numerical pipeline.
///
/// Variants fall in three groups: invalid input (configuration errors),
/// numerical trust violations (a guard tripped, the result must not be
/// believed), and plain numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("complex Hermite argument has |Im s| = {imag} > {limit}; e^(-s^2/4) would overflow")]
    HermiteOverflow { imag: f64, limit: f64 },

    #[error("Gauss-Hermite rule with {0} nodes is outside the supported range 1..={1}")]
    QuadratureSize(usize, usize),

    #[error("Hankel function is singular at w = 0")]
    HankelSingular,

    #[error("spectral parameter z = {0} lies on the cut [0, inf)")]
    OnSpectralCut(String),

    #[error("eigensolver did not converge")]
    EigenNonConvergence,

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("iterative solver did not converge: {iterations} iterations, residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("step size collapsed to {0:e} in exponential integrator")]
    StepCollapse(f64),

    #[error("wrap-around guard violated: t = {t} exceeds beta*L^2 = {limit}")]
    WrapGuard { t: f64, limit: f64 },

    #[error("Hermite tail mass {mass:e} exceeds trust threshold {threshold:e}")]
    HermiteTail { mass: f64, threshold: f64 },

    #[error("quadrature did not converge: error estimate {0:e}")]
    Quadrature(f64),

    #[error("fit window too short: {0}")]
    FitWindow(String),

    #[error("divergent continuation trace: {0}")]
    DivergentTrace(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// True when the error signals a tripped numerical-trust guard.
    pub fn is_trust_violation(&self) -> bool {
        matches!(self, Error::WrapGuard { .. } | Error::HermiteTail { .. })
    }

    /// True when the error is caused by user input or configuration.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::Config(_) | Error::DimensionMismatch(_) | Error::QuadratureSize(..)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
