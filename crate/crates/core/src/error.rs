use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("version mismatch: file has schema_version {found}, expected {expected}")]
    VersionMismatch { found: String, expected: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("checksum mismatch: header says {expected}, body hashes to {actual}")]
    Checksum { expected: String, actual: String },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("training diverged: {0}")]
    Divergence(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
