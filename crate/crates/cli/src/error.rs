use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sfpl::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("invalid {what}: {message}")]
    Invalid { what: String, message: String },

    #[error("{0}")]
    NotConverged(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn invalid(what: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Invalid {
            what: what.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Core(e) => core_code(e),
            CliError::Invalid { .. } => 2,
            CliError::NotConverged(_) => 4,
            CliError::Io { .. } | CliError::Json(_) | CliError::ThreadPool(_) => 1,
        })
    }
}

fn core_code(e: &sfpl::Error) -> u8 {
    use sfpl::Error::*;
    match e {
        Io(_) => 1,
        NotIdentifiable { .. } => 3,
        LinearSolve | NonFinite(_) | GridCap(_) | AllFitsFailed => 4,
        _ => 2,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
