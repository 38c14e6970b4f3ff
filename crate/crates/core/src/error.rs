use std::path::PathBuf;

/// Errors surfaced by configuration, simulation and output.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: `{field}` {reason}")]
    Validation { field: String, reason: String },

    #[error("non-finite value in {stage}{}", at_time(*.t))]
    NonFinite { stage: String, t: Option<f64> },

    #[error("integrator step size collapsed at t = {t}; the solution is likely escaping to infinity")]
    StepCollapse { t: f64 },

    #[error("state left the physical domain at t = {t} ({detail})")]
    DomainViolation { t: f64, detail: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("failed to parse scenario {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn at_time(t: Option<f64>) -> String {
    t.map(|t| format!(" at t = {t}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn non_finite(stage: impl Into<String>, t: Option<f64>) -> Self {
        Error::NonFinite {
            stage: stage.into(),
            t,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
