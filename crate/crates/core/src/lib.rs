//! Continuous emission ultrasound imaging.
//!
//! A probe made of one emitter and one receiver insonifies a moving medium
//! with an uninterrupted random excitation. The received RF is cut into
//! overlapping windows, each pulse-compressed against the matching slice of
//! the emission with a matched or an ISLR-minimising mismatched filter, and
//! the compressed lines are stacked into an M-mode image with a slow-time
//! rate set by the window step rather than by the round-trip time. A Barker
//! coded pulse-echo acquisition of the same medium serves as the baseline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decode;
pub mod error;
pub mod io;
pub mod linalg;
pub mod medium;
pub mod metrics;
pub mod mmode;
pub mod par;
pub mod probe;
pub mod rfsim;
pub mod scenarios;
pub mod signal;
pub mod waveform;
pub mod window;

pub use decode::{compress, matched_filter, mismatched_filter_islr, psf, DecodingFilter, FilterKind, Psf};
pub use error::{Error, Result};
pub use medium::{Medium, Motion, ScattererTrajectory};
pub use mmode::{assemble_mmode, DepthGrid, MModeImage, MModeOptions};
pub use probe::ProbeConfig;
pub use rfsim::{mimo_synthesize_rf, synthesize_rf};
pub use signal::RfRecord;
pub use window::{WindowPair, WindowPlan};
