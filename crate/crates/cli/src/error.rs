use std::fmt;
use std::path::PathBuf;

/// One violated constraint in a scenario document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    /// Dotted path of the field, empty for the document itself.
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

fn list(errors: &[FieldError]) -> String {
    errors.iter().map(|e| format!("\n  {e}")).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("malformed scenario document: {0}")]
    Syntax(String),
    #[error("invalid scenario:{}", list(.0))]
    Config(Vec<FieldError>),
    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: entroflow::Error,
    },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing {}: {source}", .path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("writing {}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    /// Field errors of an invalid scenario, empty for every other error.
    pub fn field_errors(&self) -> &[FieldError] {
        match self {
            CliError::Config(e) => e,
            _ => &[],
        }
    }
}

/// Attaches scenario context to solver errors.
pub(crate) trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Context<T> for entroflow::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Solver { context: what(), source })
    }
}
