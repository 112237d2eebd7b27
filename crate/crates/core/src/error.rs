use thiserror::Error;

/// Errors surfaced by the segmentation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(u8),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("color vector arity mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),

    /// No matured component exceeded the `delta_t` size threshold, so the
    /// pipeline has no zones to assign segments to.
    #[error("no initial segments: no matured component exceeds delta_t of the image")]
    NoInitialZones,

    #[error("incomplete label map: {0} pixels unlabeled")]
    IncompleteLabelMap(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
