use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameter or configuration value. `field` names the offending key.
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    /// A trace file could not be parsed or violates the trace format.
    #[error("{}: {message}", format_location(path, *line, column))]
    TraceFormat {
        path: PathBuf,
        line: Option<u64>,
        column: Option<String>,
        message: String,
    },

    /// A referenced input file does not exist.
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    /// Inputs are individually valid but cannot be simulated together.
    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::TraceFormat { .. } | Error::MissingFile(_) | Error::Json { .. }
        )
    }
}

fn format_location(path: &std::path::Path, line: Option<u64>, column: &Option<String>) -> String {
    let mut s = path.display().to_string();
    if let Some(line) = line {
        s.push_str(&format!(", line {line}"));
    }
    if let Some(column) = column {
        s.push_str(&format!(", column `{column}`"));
    }
    s
}
