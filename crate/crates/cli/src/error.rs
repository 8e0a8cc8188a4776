use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Engine {
        context: String,
        #[source]
        source: vacpump_core::Error,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn engine(context: impl Into<String>, source: vacpump_core::Error) -> Self {
        CliError::Engine { context: context.into(), source }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    /// 2 for configuration problems, 3 for numerical failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine { source: vacpump_core::Error::InvalidArgument(_), .. } => 2,
            CliError::Engine { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }
}
