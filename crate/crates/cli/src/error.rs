use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or flag combinations, detected before any compute.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] evseg_core::Error),
    #[error(transparent)]
    Tensor(#[from] evseg_tensor::TensorError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        use evseg_core::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Tensor(_) => "tensor",
            CliError::Core(e) => match e {
                E::Dimension(_) => "dimension",
                E::Ordering(_) => "ordering",
                E::Data(_) => "data",
                E::Parse { .. } => "parse",
                E::Metadata { .. } => "metadata",
                E::Validation(_) => "validation",
                E::Config(_) => "config",
                E::Numeric(_) => "numeric",
                E::Tensor(_) => "tensor",
                E::Io(_) => "io",
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// One JSON object on a single line.
    pub fn to_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: &'a str,
            message: String,
        }
        serde_json::to_string(&Line {
            error: self.kind(),
            message: self.to_string(),
        })
        .expect("plain strings serialize")
    }
}
