//! R-peak detection (Pan-Tompkins), beat segmentation and heart rate.

use serde::{Deserialize, Serialize};

use crate::aami::AamiClass;
use crate::error::{Error, Result};
use crate::signal::{design_bandpass, filter_signal, EcgSignal};

/// Rate at which beats are segmented and classified.
pub const SEGMENT_FS: f64 = 130.0;
/// Samples kept before the R sample.
pub const PRE_R: usize = 40;
/// Samples kept after the R sample.
pub const POST_R: usize = 64;
/// Network input length: `PRE_R + 1 + POST_R`.
pub const SEGMENT_LEN: usize = PRE_R + 1 + POST_R;
/// Fastest heart rate the pipeline accepts.
pub const MAX_BPM: f64 = 180.0;

const MIN_DURATION_S: f64 = 3.0;
const INTEGRATION_S: f64 = 0.150;
const REFRACTORY_S: f64 = 0.200;
const T_WAVE_WINDOW_S: f64 = 0.360;
const REFINE_S: f64 = 0.050;
const LEARNING_S: f64 = 2.0;
const SEARCH_BACK_FACTOR: f64 = 1.66;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RPeakList {
    /// Strictly increasing, spaced by at least `fs * 60 / MAX_BPM`.
    pub indices: Vec<usize>,
    pub fs: f64,
}

impl RPeakList {
    /// Smallest spacing (in samples) permitted between consecutive peaks.
    pub fn min_spacing(fs: f64) -> usize {
        (fs * 60.0 / MAX_BPM).ceil() as usize
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// One beat ready for classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSegment {
    /// Exactly [`SEGMENT_LEN`] samples with R at index [`PRE_R`].
    pub window: Vec<f64>,
    /// Position of the R peak in the source signal.
    pub r_index: usize,
    pub rr_prev_s: Option<f64>,
    pub rr_curr_s: Option<f64>,
    pub hr_bpm: Option<f64>,
    pub label: Option<AamiClass>,
}

/// Heart rate in BPM from two consecutive R positions.
pub fn heart_rate(r_prev: usize, r_curr: usize, fs: f64) -> Result<f64> {
    if r_curr <= r_prev {
        return Err(Error::param(format!(
            "R positions must increase (got {r_prev} then {r_curr})"
        )));
    }
    if !(fs > 0.0) {
        return Err(Error::param("sampling rate must be positive"));
    }
    Ok(60.0 * fs / (r_curr - r_prev) as f64)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    pos: usize,
    height: f64,
}

/// Pan-Tompkins detection on a bandpassed ECG.
///
/// Stages: 5-15 Hz emphasis, five-point derivative, squaring, 150 ms moving
/// window integration, then adaptive dual thresholds with search-back, a
/// 200 ms refractory period and T-wave discrimination. Each detection is
/// moved to the largest sample of `sig` within 50 ms and the list is thinned
/// to the 180 BPM spacing.
pub fn detect_rpeaks(sig: &EcgSignal) -> Result<RPeakList> {
    let fs = sig.fs;
    if sig.duration_s() < MIN_DURATION_S {
        return Err(Error::param(format!(
            "need at least {MIN_DURATION_S} s of signal, got {:.2} s",
            sig.duration_s()
        )));
    }
    let x = &sig.samples;
    let n = x.len();

    let emphasis = design_bandpass(fs, 5.0, 15.0, Some(fs.round() as usize))?;
    let band = filter_signal(sig, &emphasis)?.samples;

    let mut slope = vec![0.0; n];
    for i in 2..n.saturating_sub(2) {
        slope[i] = (2.0 * (band[i + 1] - band[i - 1]) + band[i + 2] - band[i - 2]) * fs / 8.0;
    }
    let squared: Vec<f64> = slope.iter().map(|d| d * d).collect();
    let integrated =
        moving_average_centred(&squared, (INTEGRATION_S * fs).round().max(1.0) as usize);

    let candidates: Vec<Candidate> = (1..n - 1)
        .filter(|&i| {
            let v = integrated[i];
            v > 0.0 && v > integrated[i - 1] && v >= integrated[i + 1]
        })
        .map(|i| Candidate {
            pos: i,
            height: integrated[i],
        })
        .collect();

    let refractory = (REFRACTORY_S * fs).round() as usize;
    let t_window = (T_WAVE_WINDOW_S * fs).round() as usize;
    let slope_reach = (INTEGRATION_S * fs / 2.0).round() as usize;
    let max_slope = |pos: usize| -> f64 {
        let lo = pos.saturating_sub(slope_reach);
        let hi = (pos + slope_reach).min(n - 1);
        slope[lo..=hi].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };

    let learn = ((LEARNING_S * fs) as usize).min(n);
    let mut spki = 0.25 * integrated[..learn].iter().fold(0.0f64, |m, v| m.max(*v));
    let mut npki = 0.5 * integrated[..learn].iter().sum::<f64>() / learn as f64;
    let threshold = |spki: f64, npki: f64| npki + 0.25 * (spki - npki);

    let mut qrs: Vec<Candidate> = Vec::new();
    let mut qrs_slopes: Vec<f64> = Vec::new();
    for (ci, c) in candidates.iter().enumerate() {
        if let Some(last) = qrs.last() {
            if c.pos - last.pos < refractory {
                continue;
            }
            // Search back for a missed beat once the gap grows too long.
            if let Some(rr) = mean_recent_rr(&qrs) {
                if (c.pos - last.pos) as f64 > SEARCH_BACK_FACTOR * rr {
                    let thr2 = 0.5 * threshold(spki, npki);
                    let missed = candidates[..ci]
                        .iter()
                        .filter(|m| m.pos >= last.pos + refractory && m.pos + refractory <= c.pos)
                        .filter(|m| m.height > thr2)
                        .max_by(|a, b| a.height.total_cmp(&b.height))
                        .copied();
                    if let Some(m) = missed {
                        spki = 0.25 * m.height + 0.75 * spki;
                        qrs.push(m);
                        qrs_slopes.push(max_slope(m.pos));
                    }
                }
            }
        }
        let thr1 = threshold(spki, npki);
        let is_signal = c.height > thr1 && c.height > 0.0;
        let is_t_wave = is_signal
            && match (qrs.last(), qrs_slopes.last()) {
                (Some(last), Some(&last_slope)) if c.pos - last.pos < t_window => {
                    max_slope(c.pos) < 0.5 * last_slope
                }
                _ => false,
            };
        if let Some(last) = qrs.last() {
            if c.pos - last.pos < refractory {
                // A search-back insertion landed within the refractory period.
                npki = 0.125 * c.height + 0.875 * npki;
                continue;
            }
        }
        if is_signal && !is_t_wave {
            spki = 0.125 * c.height + 0.875 * spki;
            qrs.push(*c);
            qrs_slopes.push(max_slope(c.pos));
        } else {
            npki = 0.125 * c.height + 0.875 * npki;
        }
    }

    // Refine onto the ECG maximum and enforce the rate ceiling.
    let reach = (REFINE_S * fs).round() as usize;
    let mut refined: Vec<usize> = qrs
        .iter()
        .map(|c| {
            let lo = c.pos.saturating_sub(reach);
            let hi = (c.pos + reach).min(n - 1);
            let mut p = (lo..=hi)
                .max_by(|a, b| x[*a].total_cmp(&x[*b]))
                .expect("non-empty range");
            // The first integrator peak can sit on the Q shoulder; climb to the crest.
            let stop = (p + 2 * reach).min(n - 1);
            while p < stop && x[p + 1] > x[p] {
                p += 1;
            }
            let stop = p.saturating_sub(2 * reach);
            while p > stop && x[p - 1] > x[p] {
                p -= 1;
            }
            p
        })
        .collect();
    refined.sort_unstable();
    let min_gap = RPeakList::min_spacing(fs);
    let mut indices: Vec<usize> = Vec::with_capacity(refined.len());
    for p in refined {
        match indices.last_mut() {
            Some(last) if p - *last < min_gap => {
                if x[p] > x[*last] {
                    *last = p;
                }
            }
            _ => indices.push(p),
        }
    }
    Ok(RPeakList { indices, fs })
}

fn mean_recent_rr(qrs: &[Candidate]) -> Option<f64> {
    if qrs.len() < 3 {
        return None;
    }
    let recent = &qrs[qrs.len().saturating_sub(9)..];
    let span = recent.last()?.pos - recent.first()?.pos;
    Some(span as f64 / (recent.len() - 1) as f64)
}

fn moving_average_centred(x: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + v);
    }
    let half = width / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (lo + width).min(n);
            (prefix[hi] - prefix[lo]) / width as f64
        })
        .collect()
}

/// Cuts a 105-sample window around each peak. Peaks without 40 samples of
/// history or 64 samples of future are skipped; RR context is still taken
/// from the full peak list.
pub fn segment_beats(sig: &EcgSignal, peaks: &RPeakList) -> Result<Vec<BeatSegment>> {
    if (sig.fs - SEGMENT_FS).abs() > 1e-9 {
        return Err(Error::param(format!(
            "segmentation runs at {SEGMENT_FS} Hz; resample the {} Hz signal first",
            sig.fs
        )));
    }
    let n = sig.samples.len();
    let p = &peaks.indices;
    let mut beats = Vec::with_capacity(p.len());
    for (i, &r) in p.iter().enumerate() {
        if r < PRE_R || r + POST_R >= n {
            continue;
        }
        let rr_curr_s = (i >= 1).then(|| (r - p[i - 1]) as f64 / sig.fs);
        let rr_prev_s = (i >= 2).then(|| (p[i - 1] - p[i - 2]) as f64 / sig.fs);
        let hr_bpm = if i >= 1 {
            Some(heart_rate(p[i - 1], r, sig.fs)?)
        } else {
            None
        };
        beats.push(BeatSegment {
            window: sig.samples[r - PRE_R..=r + POST_R].to_vec(),
            r_index: r,
            rr_prev_s,
            rr_curr_s,
            hr_bpm,
            label: None,
        });
    }
    Ok(beats)
}
