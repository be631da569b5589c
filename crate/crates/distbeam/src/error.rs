//! Error type shared by every stage of the simulator.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between loading a scenario and writing
/// results to disk.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument failed validation before any
    /// simulation ran (bad scenario file, nonsensical waveform
    /// parameters, out-of-range CLI values).
    #[error("validation: {0}")]
    Validation(String),

    /// Waveform synthesis was asked for something it cannot produce
    /// (e.g. a bit pattern whose slots do not fit the pulse duration).
    #[error("waveform synthesis: {0}")]
    Synthesis(String),

    /// A matched-filter detection did not clear the threshold, so no
    /// arrival time could be produced.
    #[error("detection: {0}")]
    Detection(String),

    /// The requested linear algebra is too ill-conditioned to trust
    /// (coincident receivers, collinear degeneracies).
    #[error("degenerate constraints: {0}")]
    Degenerate(String),

    /// Measured ranges describe a triangle that cannot be embedded in
    /// the plane.
    #[error("infeasible geometry: {0}")]
    Geometry(String),

    /// A resource guard tripped (grid too large, too many samples).
    #[error("resource limit: {0}")]
    Resource(String),

    /// Filesystem trouble while reading scenarios or writing outputs.
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// A JSON document failed to parse or serialize.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to: 2 for validation,
    /// 4 for i/o, 3 for any simulation-stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}
