use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("transition matrix is not ergodic: {0}")]
    NonErgodic(String),

    /// Every emission density vanished at time step `t` (0-based).
    #[error("likelihood underflowed to zero at time step {t}")]
    ZeroLikelihood { t: usize },

    #[error("argument outside the domain of the map: {0}")]
    DomainError(String),

    #[error("series of length {n} is too short (need at least {min})")]
    TooShort { n: usize, min: usize },

    #[error("moment matrix is numerically singular (condition number {condition:.3e})")]
    SingularMoment { condition: f64 },

    #[error("whitening matrix is rank deficient (sigma_R / sigma_1 = {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("tensor power method did not converge (last move {last_move:.3e})")]
    NonConvergence { last_move: f64 },

    #[error("recovered emission matrix is not invertible (sigma_R / sigma_1 = {ratio:.3e})")]
    SingularOmega { ratio: f64 },

    #[error("observed information is singular (condition number {condition:.3e})")]
    SingularInformation { condition: f64 },

    #[error("need at least two draw stores with distinct bin counts, got {0}")]
    InsufficientStores(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by the numbers rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonErgodic(_)
                | Error::ZeroLikelihood { .. }
                | Error::SingularMoment { .. }
                | Error::RankDeficient { .. }
                | Error::NonConvergence { .. }
                | Error::SingularOmega { .. }
                | Error::SingularInformation { .. }
        )
    }
}
