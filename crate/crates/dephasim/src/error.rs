use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}"
    )]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("spectral noise power diverges at omega = 0 for spectral exponent s = {s} < 1")]
    DivergentAtZeroFrequency { s: f64 },

    #[error(
        "mode expansion failed to reach tolerance {tol:.3e} with K <= {k_max}: best achieved {achieved:.3e}"
    )]
    ExpansionTolerance {
        tol: f64,
        k_max: usize,
        achieved: f64,
    },

    #[error("time {t} exceeds expansion validity horizon t_max = {t_max}")]
    BeyondExpansionHorizon { t: f64, t_max: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("path-sum oracle refuses schedule with {pulses} pulses (limit {limit})")]
    OracleTooLarge { pulses: usize, limit: usize },

    #[error("fit did not converge: {0}")]
    FitFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
