//! Core algorithms for three-camera gaze tracking on a desktop monitor.
//!
//! Everything in this crate is pure computation over in-memory data:
//!
//! * [`geometry`] — pinhole projection, ray back-projection, least-squares
//!   triangulation, third-view prediction, and gaze/screen intersection.
//!   This is the analytic oracle the learned components are checked against.
//! * [`synth`] — procedural 40×20 eye images and aligned scene sampling,
//!   standing in for real webcam capture.
//! * [`autodiff`] — a minimal reverse-mode tape over dense f64 tensors.
//! * [`network`] — the split gaze network: coordinate branch with
//!   intra-validation heads, shared image CNN, discriminator-weighted fusion,
//!   joint loss, and Adam training steps.
//! * [`clickcalib`] — replay of usage-event logs into filtered click
//!   opportunities and aligned sample timestamps.
//! * [`harness`] — dataset splits, training loops, cm-error evaluation,
//!   angle sweeps, heatmaps, ablations, and label-mixing experiments.
//!
//! The crate is `no_std` (with `alloc`); file formats, IO, and the CLI live
//! in the companion `tricam` crate. Enable the `parallel` feature to spread
//! batch-gradient evaluation across threads (reductions stay order-fixed, so
//! results are bit-identical with and without it).

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(any(test, feature = "parallel"))]
extern crate std;

pub mod autodiff;
pub mod clickcalib;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod network;
pub mod synth;

pub use error::{ClickError, GeometryError, HarnessError, NetworkError};
