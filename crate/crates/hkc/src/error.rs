use std::path::PathBuf;

/// Failures of the command-line layer; each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Model(#[from] hkcopula::Error),

    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    /// 2 for bad input, 3 for numerical trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 3,
            CliError::Model(e) => match e {
                hkcopula::Error::Tolerance { .. }
                | hkcopula::Error::AttemptsExhausted { .. }
                | hkcopula::Error::NonFinite(_)
                | hkcopula::Error::Bracketing(_) => 3,
                _ => 2,
            },
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
