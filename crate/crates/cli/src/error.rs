use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// A run failed part-way; whatever was computed has been written already.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown figure '{0}' (expected fig1, fig2, fig3 or fig4)")]
    UnknownFigure(String),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::UnknownFigure(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<skinflow::Error> for CliError {
    fn from(e: skinflow::Error) -> Self {
        match e {
            skinflow::Error::InvalidParams(_) | skinflow::Error::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
