use thiserror::Error;

/// Harness failures; [`HarnessError::category`] tags the CLI error line.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] wtqa_core::Error),

    #[error("{path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Report(String),
}

impl HarnessError {
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Core(e) => e.category(),
            HarnessError::Output { .. } | HarnessError::Csv(_) => "io",
            HarnessError::Report(_) => "report",
        }
    }

    pub(crate) fn output(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Output {
            path: path.display().to_string(),
            source,
        }
    }
}
