use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integrator instability at step {step}{}: |q| = {norm:.6}", stream_suffix(*.stream))]
    Instability {
        step: usize,
        stream: Option<u64>,
        norm: f64,
    },

    #[error("winding series did not converge within {cap} terms per side")]
    Series { cap: usize },

    #[error("conditioning failed: boundary transition probability {0:e} vanishes")]
    Conditioning(f64),

    #[error("selection accepted none of {total} trajectories (acceptance rate 0)")]
    EmptySelection { total: usize },

    #[error("Bayesian update lost positivity at step {step}: |c|^2 - p0*p1 = {excess:e}")]
    Positivity { step: usize, excess: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("ensemble file is malformed: {0}")]
    Format(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn stream_suffix(stream: Option<u64>) -> String {
    match stream {
        Some(id) => format!(" of stream {id}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Tags an instability error with the trajectory it came from.
    pub(crate) fn with_stream(self, id: u64) -> Self {
        match self {
            Error::Instability { step, norm, .. } => Error::Instability {
                step,
                stream: Some(id),
                norm,
            },
            other => other,
        }
    }
}
