//! Signal quality grading of 10-second windows.
//!
//! A window is normalised by its peak magnitude and then checked twice: a
//! rectified-mean absence test and a moving-standard-deviation test that
//! reacts when an artifact dominates the normalisation and suppresses the
//! beats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{normalize_max, EcgSignal, Normalized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    /// Mean deviation above the threshold means acceptable.
    AsStated,
    /// Mean deviation above the threshold means unacceptable.
    Inverted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqaConfig {
    pub window_s: f64,
    pub lambda_absence: f64,
    pub std_threshold: f64,
    /// Moving window length in samples; `None` derives `round(2 fs / 5)`.
    pub mov_window_len: Option<usize>,
    pub overlap_frac: f64,
    pub polarity: Polarity,
}

impl Default for SqaConfig {
    fn default() -> Self {
        Self {
            window_s: 10.0,
            lambda_absence: 0.05,
            std_threshold: 0.2,
            mov_window_len: None,
            overlap_frac: 0.70,
            polarity: Polarity::AsStated,
        }
    }
}

impl SqaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.overlap_frac > 0.0 && self.overlap_frac < 1.0) {
            return Err(Error::param("overlap_frac must lie in (0, 1)"));
        }
        if !(self.lambda_absence > 0.0 && self.std_threshold > 0.0 && self.window_s > 0.0) {
            return Err(Error::param(
                "SQA thresholds and window length must be positive",
            ));
        }
        Ok(())
    }

    pub fn moving_window(&self, fs: f64) -> usize {
        self.mov_window_len
            .unwrap_or_else(|| (2.0 * fs / 5.0).round() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grade {
    Acceptable,
    Unacceptable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SqaReason {
    Clean,
    Absence,
    AbruptChange,
    Flat,
}

impl SqaReason {
    pub fn code(self) -> u8 {
        match self {
            SqaReason::Clean => 0,
            SqaReason::Absence => 1,
            SqaReason::AbruptChange => 2,
            SqaReason::Flat => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqaVerdict {
    pub grade: Grade,
    pub reason: SqaReason,
    /// Mean of the rectified normalised window (0 when flat).
    pub mean_abs: f64,
    /// Mean of the moving standard deviation waveform (0 when not reached).
    pub mean_sigma: f64,
}

impl SqaVerdict {
    pub fn is_acceptable(&self) -> bool {
        self.grade == Grade::Acceptable
    }

    fn rejected(reason: SqaReason, mean_abs: f64, mean_sigma: f64) -> Self {
        Self {
            grade: Grade::Unacceptable,
            reason,
            mean_abs,
            mean_sigma,
        }
    }
}

/// Sample standard deviation over sliding windows of `win_len` samples,
/// advanced by `max(1, round(win_len * (1 - overlap_frac)))`.
pub fn moving_std(x: &[f64], win_len: usize, overlap_frac: f64) -> Result<Vec<f64>> {
    if win_len < 2 {
        return Err(Error::param("moving window must span at least 2 samples"));
    }
    if x.len() < win_len {
        return Err(Error::param(format!(
            "moving window of {win_len} samples exceeds signal length {}",
            x.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap_frac) {
        return Err(Error::param("overlap_frac must lie in [0, 1)"));
    }
    let hop = ((win_len as f64 * (1.0 - overlap_frac)).round() as usize).max(1);
    let count = (x.len() - win_len) / hop + 1;
    Ok((0..count)
        .map(|i| {
            let w = &x[i * hop..i * hop + win_len];
            let mean = w.iter().sum::<f64>() / win_len as f64;
            let ss: f64 = w.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (win_len - 1) as f64).sqrt()
        })
        .collect())
}

/// Grades one window.
pub fn grade_window(window: &EcgSignal, cfg: &SqaConfig) -> Result<SqaVerdict> {
    cfg.validate()?;
    let dur = window.duration_s();
    if (dur - cfg.window_s).abs() > 0.1 * cfg.window_s {
        return Err(Error::param(format!(
            "window lasts {dur:.2} s; expected {} s +/- 10%",
            cfg.window_s
        )));
    }
    let norm = match normalize_max(&window.samples)? {
        Normalized::Flat => return Ok(SqaVerdict::rejected(SqaReason::Flat, 0.0, 0.0)),
        Normalized::Scaled(v) => v,
    };
    let mean_abs = norm.iter().map(|v| v.abs()).sum::<f64>() / norm.len() as f64;
    if mean_abs < cfg.lambda_absence {
        return Ok(SqaVerdict::rejected(SqaReason::Absence, mean_abs, 0.0));
    }
    let sigma = moving_std(&norm, cfg.moving_window(window.fs), cfg.overlap_frac)?;
    let mean_sigma = sigma.iter().sum::<f64>() / sigma.len() as f64;
    let above = mean_sigma > cfg.std_threshold;
    let acceptable = match cfg.polarity {
        Polarity::AsStated => above,
        Polarity::Inverted => !above,
    };
    Ok(if acceptable {
        SqaVerdict {
            grade: Grade::Acceptable,
            reason: SqaReason::Clean,
            mean_abs,
            mean_sigma,
        }
    } else {
        SqaVerdict::rejected(SqaReason::AbruptChange, mean_abs, mean_sigma)
    })
}

/// Tiles a record into consecutive windows (dropping the partial tail) and
/// grades each. Returned start indices are relative to the record.
pub fn grade_record(sig: &EcgSignal, cfg: &SqaConfig) -> Result<Vec<(usize, SqaVerdict)>> {
    cfg.validate()?;
    if sig.is_empty() {
        return Err(Error::param("cannot grade an empty record"));
    }
    let win = (cfg.window_s * sig.fs).round() as usize;
    if win == 0 {
        return Ok(Vec::new());
    }
    (0..sig.len() / win)
        .map(|k| {
            let start = k * win;
            grade_window(&sig.slice(start, start + win), cfg).map(|v| (start, v))
        })
        .collect()
}
