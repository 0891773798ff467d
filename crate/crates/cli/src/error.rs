use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A config key holds an unusable value.
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    /// Malformed input, blamed on a file line or record.
    #[error("{location}: {message}")]
    Input { location: String, message: String },
    #[error("{context}: {message}")]
    Runtime { context: String, message: String },
}

impl CliError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Self::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn runtime(context: impl Into<String>, message: impl ToString) -> Self {
        Self::Runtime {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// 1 for validation errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Input { .. } => 1,
            Self::Runtime { .. } => 2,
        }
    }
}
