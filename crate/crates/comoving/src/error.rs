use std::path::PathBuf;

use comoving_core::Error as CoreError;

/// Errors surfaced by the command line, each mapped to a process exit code.
///
/// | code | meaning                                        |
/// |------|------------------------------------------------|
/// | 2    | bad command line (reported by the parser)      |
/// | 3    | invalid configuration or parameter             |
/// | 4    | file system error                              |
/// | 5    | malformed input file                           |
/// | 6    | numerical failure (no peaks, divergence, ...)  |
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {line}, column {column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] CoreError),
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<AppError>,
    },
}

pub type AppResult<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 3,
            AppError::Io { .. } => 4,
            AppError::Parse { .. } => 5,
            AppError::Model(e) => match e {
                CoreError::InvalidParameter { .. } | CoreError::ShapeMismatch { .. } | CoreError::EmptyGrid(_) => 3,
                _ => 6,
            },
            AppError::Stage { source, .. } => source.exit_code(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_the_cause() {
        assert_eq!(AppError::config("x").exit_code(), 3);
        assert_eq!(AppError::Model(CoreError::Degenerate("x")).exit_code(), 6);
        let staged = AppError::Stage {
            stage: "pod".into(),
            source: Box::new(AppError::io("a", std::io::Error::other("gone"))),
        };
        assert_eq!(staged.exit_code(), 4);
        assert!(staged.to_string().contains("pod"));
    }
}
