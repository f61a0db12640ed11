//! Energy-aware ECG monitoring split across an edge node and a fog service.
//!
//! The pipeline grades 10-second windows for signal quality, detects and
//! segments beats, gates normal beats on the edge with a tiny first output
//! block plus heart-rate-variability and template checks, and forwards only
//! abnormal beats (as the first convolution block's feature map) to the fog
//! node, which finishes the 4-class classification.
//!
//! Module map:
//! - [`signal`]: containers, FIR bandpass, resampling, synthetic ECG.
//! - [`qrs`]: Pan-Tompkins detection, beat segmentation, heart rate.
//! - [`sqa`]: acceptable/unacceptable window grading.
//! - [`nn`]: tensor engine, the split CNN, training, weight files.
//! - [`edge`]: decision fusion, rate control, the edge session.
//! - [`link`]: wire protocol, fog service, loopback and TCP links.
//! - [`eval`]: records, metrics, energy model, reports, config.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aami;
pub mod edge;
pub mod error;
pub mod eval;
pub mod link;
pub mod nn;
pub mod qrs;
pub mod signal;
pub mod sqa;

pub use aami::AamiClass;
pub use error::{Error, Result};
pub use signal::EcgSignal;
