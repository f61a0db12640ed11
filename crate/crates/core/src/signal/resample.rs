use std::f64::consts::PI;

use super::EcgSignal;
use crate::error::{Error, Result};

/// Kernel half-width in output-rate samples.
const HALF_WIDTH: f64 = 16.0;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited resampling with a Hann-windowed sinc kernel.
///
/// When downsampling the kernel is stretched so its cutoff sits at the new
/// Nyquist frequency. Weights are renormalised per output sample, which
/// keeps constants exact up to the record edges.
pub fn resample(sig: &EcgSignal, target_fs: f64) -> Result<EcgSignal> {
    if !(target_fs > 0.0 && target_fs.is_finite()) {
        return Err(Error::param(format!(
            "target rate must be positive, got {target_fs}"
        )));
    }
    let n_in = sig.samples.len();
    let ratio = target_fs / sig.fs;
    let n_out = (n_in as f64 * ratio).round() as usize;
    let start_index = (sig.start_index as f64 * ratio).round() as usize;
    if n_in == 0 {
        return Ok(EcgSignal {
            samples: Vec::new(),
            fs: target_fs,
            start_index,
        });
    }
    let scale = ratio.min(1.0);
    let reach = HALF_WIDTH / scale;
    let x = &sig.samples;
    let samples = (0..n_out)
        .map(|m| {
            let t = m as f64 / ratio;
            let lo = ((t - reach).ceil().max(0.0)) as usize;
            let hi = ((t + reach).floor() as usize).min(n_in - 1);
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (k, xk) in x.iter().enumerate().take(hi + 1).skip(lo) {
                let d = t - k as f64;
                let u = d / reach;
                if u.abs() >= 1.0 {
                    continue;
                }
                let w = scale * sinc(scale * d) * 0.5 * (1.0 + (PI * u).cos());
                acc += w * xk;
                wsum += w;
            }
            if wsum != 0.0 {
                acc / wsum
            } else {
                0.0
            }
        })
        .collect();
    Ok(EcgSignal {
        samples,
        fs: target_fs,
        start_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let sig = EcgSignal::new(vec![0.7; 3600], 360.0).unwrap();
        let out = resample(&sig, 130.0).unwrap();
        assert_eq!(out.len(), 1300);
        assert_eq!(out.fs, 130.0);
        for v in &out.samples {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn output_length_rounds() {
        let sig = EcgSignal::new(vec![0.0; 1000], 360.0).unwrap();
        assert_eq!(resample(&sig, 130.0).unwrap().len(), 361);
        assert!(resample(&sig, 0.0).is_err());
    }

    #[test]
    fn sinusoid_360_to_130() {
        let amp = 1.0;
        let x: Vec<f64> = (0..3600)
            .map(|i| amp * (2.0 * PI * 5.0 * i as f64 / 360.0).sin())
            .collect();
        let out = resample(&EcgSignal::new(x, 360.0).unwrap(), 130.0).unwrap();
        let mse: f64 = out
            .samples
            .iter()
            .enumerate()
            .map(|(m, v)| {
                let truth = amp * (2.0 * PI * 5.0 * m as f64 / 130.0).sin();
                (v - truth).powi(2)
            })
            .sum::<f64>()
            / out.len() as f64;
        assert!(mse.sqrt() < 0.01 * amp, "rms {}", mse.sqrt());
    }
}
