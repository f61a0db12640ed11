use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::EcgSignal;
use crate::error::{Error, Result};

/// Linear-phase FIR bandpass designed with a Hamming window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub f1: f64,
    pub f2: f64,
    pub order: usize,
}

impl FirFilter {
    /// Group delay in samples; always an integer because the order is even.
    pub fn delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// |H(e^{jω})| at `freq_hz` for sampling rate `fs`.
    pub fn magnitude_at(&self, freq_hz: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / fs;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, h) in self.taps.iter().enumerate() {
            re += h * (w * n as f64).cos();
            im -= h * (w * n as f64).sin();
        }
        re.hypot(im)
    }
}

/// Default design order for a lower cutoff `f1`: two periods of `f1`.
pub fn default_order(fs: f64, f1: f64) -> usize {
    (2.0 * fs / f1).round() as usize
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Window-method bandpass between `f1` and `f2` Hz. `order = None` picks
/// [`default_order`]. Odd orders are rounded up so the filter has an odd
/// tap count and an integer group delay.
pub fn design_bandpass(fs: f64, f1: f64, f2: f64, order: Option<usize>) -> Result<FirFilter> {
    if !(fs > 0.0 && f1 > 0.0 && f1 < f2 && f2 < fs / 2.0) {
        return Err(Error::param(format!(
            "band edges must satisfy 0 < f1 < f2 < fs/2 (f1={f1}, f2={f2}, fs={fs})"
        )));
    }
    let mut order = order.unwrap_or_else(|| default_order(fs, f1));
    if order < 2 {
        return Err(Error::param(format!(
            "filter order must be >= 2, got {order}"
        )));
    }
    if order % 2 == 1 {
        order += 1;
    }
    let len = order + 1;
    let mid = order / 2;
    let window = |n: usize| 0.54 - 0.46 * (2.0 * PI * n as f64 / order as f64).cos();

    // Two unit-DC-gain lowpass prototypes; their difference has exactly zero DC gain.
    let lowpass = |fc: f64| -> Vec<f64> {
        let norm = 2.0 * fc / fs;
        let mut half: Vec<f64> = (0..=mid)
            .map(|n| window(n) * norm * sinc(norm * (n as f64 - mid as f64)))
            .collect();
        let sum: f64 = 2.0 * half[..mid].iter().sum::<f64>() + half[mid];
        half.iter_mut().for_each(|v| *v /= sum);
        half
    };
    let lo = lowpass(f1);
    let hi = lowpass(f2);
    let mut taps = vec![0.0; len];
    for n in 0..=mid {
        let v = hi[n] - lo[n];
        taps[n] = v;
        taps[len - 1 - n] = v;
    }
    Ok(FirFilter {
        taps,
        f1,
        f2,
        order,
    })
}

/// Zero-phase application: a centred convolution (forward filtering with the
/// group delay removed). Edges are extended by odd reflection.
pub fn filter_signal(sig: &EcgSignal, filt: &FirFilter) -> Result<EcgSignal> {
    let n = sig.samples.len();
    let taps = &filt.taps;
    if taps.len() > n {
        return Err(Error::param(format!(
            "signal of {n} samples is shorter than the {}-tap filter",
            taps.len()
        )));
    }
    let x = &sig.samples;
    let last = n as isize - 1;
    let at = |i: isize| -> f64 {
        if i < 0 {
            2.0 * x[0] - x[(-i) as usize]
        } else if i > last {
            2.0 * x[n - 1] - x[(2 * last - i) as usize]
        } else {
            x[i as usize]
        }
    };
    let delay = filt.delay() as isize;
    let samples = (0..n as isize)
        .map(|i| {
            taps.iter()
                .enumerate()
                .map(|(k, h)| h * at(i + delay - k as isize))
                .sum()
        })
        .collect();
    Ok(EcgSignal {
        samples,
        fs: sig.fs,
        start_index: sig.start_index,
    })
}
