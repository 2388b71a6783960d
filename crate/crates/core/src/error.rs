use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Invalid parameters or model strings.
    #[error("configuration error: {0}")]
    Config(String),
    /// Data generation produced an unusable dataset.
    #[error("generation error: {0}")]
    Generation(String),
    /// Least-squares fit failed.
    #[error("fit error: {0}")]
    Fit(#[from] FitError),
    /// Monte Carlo estimation could not produce a trustworthy estimate.
    #[error("estimation error: {0}")]
    Estimation(String),
    /// Linear algebra on a transition matrix failed.
    #[error("analysis error: {0}")]
    Analysis(String),
}

impl Error {
    pub(crate) fn config(msg: &str) -> Error {
        Error::Config(msg.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FitError {
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("residual sum of squares is zero")]
    ExactFit,
    #[error("sample size must exceed the parameter count")]
    TooFewObservations,
}
