use thiserror::Error;

use bellsim_core::SimError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical contract violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for bad configuration or input, 3 for numerical problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Contract(_) => 3,
            CliError::Sim(e) => match e {
                SimError::NotUnitary(_)
                | SimError::ZeroAcceptance
                | SimError::InvalidDistribution(_)
                | SimError::NonPositiveBaseline(_) => 3,
                _ => 2,
            },
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
