use std::io::ErrorKind;
use std::process::ExitCode;

/// Error carrying the process exit status it should map to.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct AppError {
    pub message: String,
    /// True for bad input or configuration (exit 2), false for internal failures (exit 1).
    pub user: bool,
}

impl AppError {
    pub fn user(message: impl Into<String>) -> Self {
        Self { message: message.into(), user: true }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { message: message.into(), user: false }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(if self.user { 2 } else { 1 })
    }
}

impl From<leafcnn::Error> for AppError {
    fn from(e: leafcnn::Error) -> Self {
        let user = match &e {
            // missing or unreadable inputs are the caller's problem
            leafcnn::Error::Io { source, .. } => {
                matches!(source.kind(), ErrorKind::NotFound | ErrorKind::PermissionDenied | ErrorKind::IsADirectory)
            }
            other => other.is_user_error(),
        };
        Self { message: e.to_string(), user }
    }
}
