//! Error types shared across the crate.

use alloc::string::String;

/// Failures of the analytic geometry operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    /// A back-projection was requested for an undetected view coordinate.
    #[error("no-observation: view coordinate is undetected")]
    NoObservation,
    /// Fewer than two rays were supplied; a single direction cannot fix depth.
    #[error("underdetermined: triangulation needs at least 2 rays, got {0}")]
    Underdetermined(usize),
    /// The supplied rays (or the eye position) leave the problem singular.
    #[error("degenerate: {0}")]
    Degenerate(&'static str),
    /// The gaze ray does not reach the screen plane.
    #[error("no-intersection: gaze ray does not hit the screen")]
    NoIntersection,
    /// A model parameter violates its invariant.
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
}

/// Failures of network construction, execution, or training.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("bad-architecture: {0}")]
    BadArchitecture(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("diverged: non-finite loss at {0}")]
    Diverged(String),
}

/// Failures of the click-opportunity pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClickError {
    /// Event log is not sorted by time; the payload is the 0-based index of
    /// the first event that goes backwards.
    #[error("unsorted log: event {0} precedes its predecessor in time")]
    Unsorted(usize),
    #[error("gaze stream is empty")]
    EmptyGazeStream,
}

/// Failures of experiment orchestration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("dataset too small: need at least {need} samples, got {got}")]
    DatasetTooSmall { need: usize, got: usize },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("invalid split fractions: {0}")]
    BadSplit(&'static str),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("training diverged at epoch {epoch}")]
    DivergedAt { epoch: usize },
}
