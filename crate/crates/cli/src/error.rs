use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] kfp_core::Error),

    /// A report was written but a numerical-trust guard tripped.
    #[error("numerical-trust guard violated: {0}")]
    Trust(String),

    #[error("acceptance criteria failed: {0}")]
    Acceptance(String),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_config_error() => 2,
            CliError::Core(e) if e.is_trust_violation() => 3,
            CliError::Trust(_) => 3,
            CliError::Acceptance(_) => 4,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
