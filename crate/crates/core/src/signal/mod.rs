//! Signal containers, filtering, resampling and the synthetic ECG source.

mod fir;
pub mod io;
mod resample;
pub mod synth;

pub use fir::{design_bandpass, filter_signal, FirFilter};
pub use resample::resample;
pub use synth::{generate_ecg, GroundTruth, Morphology, NoiseSpec, SynthSpec, Wave};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this peak magnitude (mV) a window is treated as flat.
pub const EPS_FLAT: f64 = 1e-6;

/// A uniformly sampled single-lead ECG in millivolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgSignal {
    pub samples: Vec<f64>,
    pub fs: f64,
    /// Offset of `samples[0]` within the originating record.
    pub start_index: usize,
}

impl EcgSignal {
    /// Validates `fs > 0` and that every sample is finite.
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        Self::with_start(samples, fs, 0)
    }

    pub fn with_start(samples: Vec<f64>, fs: f64, start_index: usize) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::param(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            fs,
            start_index,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Sub-range `[start, end)` as a new signal whose `start_index` is
    /// relative to the originating record.
    pub fn slice(&self, start: usize, end: usize) -> EcgSignal {
        EcgSignal {
            samples: self.samples[start..end].to_vec(),
            fs: self.fs,
            start_index: self.start_index + start,
        }
    }
}

/// Result of [`normalize_max`].
#[derive(Debug, Clone, PartialEq)]
pub enum Normalized {
    Scaled(Vec<f64>),
    /// Peak magnitude below [`EPS_FLAT`]; nothing was divided.
    Flat,
}

/// Divides a window by its peak absolute value.
pub fn normalize_max(window: &[f64]) -> Result<Normalized> {
    if window.is_empty() {
        return Err(Error::param("cannot normalize an empty window"));
    }
    let peak = window.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak < EPS_FLAT {
        return Ok(Normalized::Flat);
    }
    Ok(Normalized::Scaled(
        window.iter().map(|v| v / peak).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_divides_by_peak_magnitude() {
        let out = normalize_max(&[2.0, -4.0, 1.0]).unwrap();
        assert_eq!(out, Normalized::Scaled(vec![0.5, -1.0, 0.25]));
    }

    #[test]
    fn normalize_flat_window() {
        assert_eq!(normalize_max(&[0.0; 16]).unwrap(), Normalized::Flat);
        assert_eq!(normalize_max(&[1e-7, -5e-7]).unwrap(), Normalized::Flat);
        assert!(normalize_max(&[]).is_err());
    }

    #[test]
    fn normalized_peak_is_one() {
        let w: Vec<f64> = (0..50)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3)
            .collect();
        let Normalized::Scaled(out) = normalize_max(&w).unwrap() else {
            panic!("unexpected flat");
        };
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(peak, 1.0);
    }

    #[test]
    fn rejects_bad_signals() {
        assert!(EcgSignal::new(vec![0.0], 0.0).is_err());
        assert!(EcgSignal::new(vec![f64::NAN], 100.0).is_err());
        assert!(EcgSignal::new(vec![1.0, 2.0], 130.0).is_ok());
    }
}
