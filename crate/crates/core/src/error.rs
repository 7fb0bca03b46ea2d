use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion is not pure (real part {0:.3e})")]
    NotPure(f64),
    #[error("bilinear constraint violated: BL = {0:.3e}")]
    NotPhysical(f64),
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("loop degenerated: {0}")]
    Degenerate(String),
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 3 for configuration problems, 2 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Csv(_) => 3,
            _ => 2,
        }
    }
}
