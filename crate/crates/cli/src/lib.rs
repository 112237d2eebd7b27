//! File formats and configuration plumbing for the `evoseg` binary:
//! binary PGM/PPM images in, PBM boundary maps and plain-text label maps
//! out, plus `key=value` config files layered under command-line flags.

pub mod configfile;
pub mod labelfile;
pub mod netpbm;
pub mod outputs;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Core(#[from] evoseg::Error),
}

impl Error {
    pub(crate) fn format(path: &std::path::Path, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.display().to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
