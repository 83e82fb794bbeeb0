use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] seqmed_core::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("config syntax: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Core(e) => e.kind(),
            HarnessError::Config(_) | HarnessError::Toml(_) => "config",
            HarnessError::Csv(_) => "csv",
            HarnessError::Io(_) => "io",
        }
    }
}
