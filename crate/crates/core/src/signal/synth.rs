//! Sum-of-Gaussians ECG generator with exact ground truth.
//!
//! Each beat is five Gaussian waves (P, Q, R, S, T) positioned relative to
//! the R peak, which always falls exactly on a sample. Abnormal beats arrive
//! early and carry a class-specific QRS/T shape. Noise overlays are applied
//! after the clean trace is built, so `GroundTruth` never moves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EcgSignal;
use crate::aami::AamiClass;
use crate::error::{Error, Result};

/// Shortest RR allowed: the 180 BPM ceiling.
pub const MIN_RR_S: f64 = 60.0 / 180.0;

/// One Gaussian wave: amplitude in mV, width (standard deviation) and
/// offset from the R peak in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amplitude: f64,
    pub width_s: f64,
    pub offset_s: f64,
}

const fn wave(amplitude: f64, width_s: f64, offset_s: f64) -> Wave {
    Wave {
        amplitude,
        width_s,
        offset_s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Morphology {
    pub p: Wave,
    pub q: Wave,
    pub r: Wave,
    pub s: Wave,
    pub t: Wave,
}

impl Morphology {
    pub const NORMAL: Morphology = Morphology {
        p: wave(0.15, 0.030, -0.20),
        q: wave(-0.12, 0.012, -0.040),
        r: wave(1.00, 0.020, 0.0),
        s: wave(-0.45, 0.018, 0.045),
        t: wave(0.45, 0.065, 0.28),
    };

    /// Supraventricular ectopic: retrograde (inverted, late) P, normal QRS.
    pub const SVEB: Morphology = Morphology {
        p: wave(-0.14, 0.020, -0.14),
        q: wave(-0.12, 0.012, -0.040),
        r: wave(0.95, 0.020, 0.0),
        s: wave(-0.45, 0.018, 0.045),
        t: wave(0.35, 0.060, 0.26),
    };

    /// Ventricular ectopic: no P, wide tall QRS, discordant T.
    pub const VEB: Morphology = Morphology {
        p: wave(0.0, 0.025, -0.20),
        q: wave(-0.05, 0.015, -0.06),
        r: wave(1.25, 0.040, 0.0),
        s: wave(-0.45, 0.030, 0.08),
        t: wave(-0.45, 0.070, 0.34),
    };

    /// Fusion: between normal and ventricular.
    pub const FUSION: Morphology = Morphology {
        p: wave(0.08, 0.025, -0.20),
        q: wave(-0.06, 0.012, -0.045),
        r: wave(1.05, 0.026, 0.0),
        s: wave(-0.35, 0.020, 0.055),
        t: wave(-0.12, 0.060, 0.30),
    };

    pub fn waves(&self) -> [Wave; 5] {
        [self.p, self.q, self.r, self.s, self.t]
    }

    fn for_class(normal: &Morphology, class: AamiClass) -> Morphology {
        match class {
            AamiClass::N | AamiClass::Q => *normal,
            AamiClass::S => Self::SVEB,
            AamiClass::V => Self::VEB,
            AamiClass::F => Self::FUSION,
        }
    }
}

impl Default for Morphology {
    fn default() -> Self {
        Self::NORMAL
    }
}

/// Fraction of the nominal RR that precedes an ectopic beat.
fn prematurity(class: AamiClass) -> f64 {
    match class {
        AamiClass::S => 0.65,
        AamiClass::V => 0.70,
        AamiClass::F => 0.92,
        AamiClass::N | AamiClass::Q => 1.0,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// (amplitude mV, frequency Hz).
    pub baseline_wander: Option<(f64, f64)>,
    pub hf_noise_std: f64,
    /// Electrode-off interval (start s, end s): the trace reads zero.
    pub dropout: Option<(f64, f64)>,
    /// (amplitude mV, onset s): a DC step that persists to the end.
    pub step: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub fs: f64,
    pub duration_s: f64,
    pub bpm: f64,
    /// Shape of normal beats; ectopic shapes are fixed per class.
    pub morphology: Morphology,
    /// Probability that a beat (after the first two) is ectopic.
    pub abnormal_beat_rate: f64,
    /// Relative weights of S, V and F among ectopic beats.
    pub abnormal_mix: [f64; 3],
    /// Explicit (beat number, class) placements; when non-empty the random
    /// draw is skipped.
    pub forced_beats: Vec<(usize, AamiClass)>,
    /// Relative standard deviation of beat-to-beat RR variation.
    pub rr_jitter: f64,
    /// Relative standard deviation of per-beat amplitude variation.
    pub amplitude_jitter: f64,
    pub noise: NoiseSpec,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            fs: 360.0,
            duration_s: 60.0,
            bpm: 72.0,
            morphology: Morphology::NORMAL,
            abnormal_beat_rate: 0.0,
            abnormal_mix: [1.0, 1.0, 1.0],
            forced_beats: Vec::new(),
            rr_jitter: 0.01,
            amplitude_jitter: 0.03,
            noise: NoiseSpec::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0) || !(self.duration_s > 0.0) {
            return Err(Error::param("fs and duration must be positive"));
        }
        if !(30.0..=180.0).contains(&self.bpm) {
            return Err(Error::param(format!("bpm {} outside [30, 180]", self.bpm)));
        }
        if !(0.0..=1.0).contains(&self.abnormal_beat_rate) {
            return Err(Error::param("abnormal_beat_rate must lie in [0, 1]"));
        }
        if self.abnormal_mix.iter().any(|w| *w < 0.0)
            || self.abnormal_mix.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::param(
                "abnormal_mix weights must be non-negative and not all zero",
            ));
        }
        if self.forced_beats.iter().any(|(_, c)| *c == AamiClass::Q) {
            return Err(Error::param("Q beats cannot be synthesised"));
        }
        Ok(())
    }
}

/// Exact R-peak sample indices and their labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub r_peaks: Vec<usize>,
    pub labels: Vec<AamiClass>,
}

/// Deterministic for a fixed `(spec, seed)`.
pub fn generate_ecg(spec: &SynthSpec, seed: u64) -> Result<(EcgSignal, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let fs = spec.fs;
    let n = (spec.duration_s * fs).round() as usize;
    let nominal_rr = 60.0 / spec.bpm;

    // Beat schedule.
    let mut truth = GroundTruth::default();
    let mut t = 0.5;
    let mut beat = 0usize;
    let mut pause = 0.0;
    loop {
        let class = if !spec.forced_beats.is_empty() {
            spec.forced_beats
                .iter()
                .find(|(b, _)| *b == beat)
                .map_or(AamiClass::N, |(_, c)| *c)
        } else if beat >= 2 && rng.random::<f64>() < spec.abnormal_beat_rate {
            pick_ectopic(&mut rng, &spec.abnormal_mix)
        } else {
            AamiClass::N
        };
        if beat > 0 {
            let jitter = 1.0 + spec.rr_jitter * std_normal.sample(&mut rng);
            let rr = (nominal_rr * prematurity(class) * jitter + pause).max(MIN_RR_S);
            t += rr;
        }
        // Full compensatory pause after a ventricular beat.
        pause = if class == AamiClass::V {
            nominal_rr * (1.0 - prematurity(class))
        } else {
            0.0
        };
        let idx = (t * fs).round() as usize;
        if idx >= n {
            break;
        }
        t = idx as f64 / fs;
        truth.r_peaks.push(idx);
        truth.labels.push(class);
        beat += 1;
    }

    // Clean trace.
    let mut samples = vec![0.0; n];
    for (&r, &class) in truth.r_peaks.iter().zip(&truth.labels) {
        let shape = Morphology::for_class(&spec.morphology, class);
        let gain = 1.0 + spec.amplitude_jitter * std_normal.sample(&mut rng);
        for w in shape.waves() {
            if w.amplitude == 0.0 {
                continue;
            }
            let centre = r as f64 / fs + w.offset_s;
            let lo = ((centre - 5.0 * w.width_s) * fs).floor().max(0.0) as usize;
            let hi = (((centre + 5.0 * w.width_s) * fs).ceil().max(0.0) as usize).min(n);
            for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
                let d = i as f64 / fs - centre;
                *s += gain * w.amplitude * (-d * d / (2.0 * w.width_s * w.width_s)).exp();
            }
        }
    }

    apply_noise(&mut samples, fs, &spec.noise, &mut rng, &std_normal);
    Ok((EcgSignal::new(samples, fs)?, truth))
}

fn pick_ectopic(rng: &mut ChaCha8Rng, mix: &[f64; 3]) -> AamiClass {
    let total: f64 = mix.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (w, c) in mix.iter().zip([AamiClass::S, AamiClass::V, AamiClass::F]) {
        if u < *w {
            return c;
        }
        u -= w;
    }
    AamiClass::F
}

fn apply_noise(
    samples: &mut [f64],
    fs: f64,
    noise: &NoiseSpec,
    rng: &mut ChaCha8Rng,
    std_normal: &Normal<f64>,
) {
    if let Some((amp, freq)) = noise.baseline_wander {
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        for (i, s) in samples.iter_mut().enumerate() {
            *s += amp * (std::f64::consts::TAU * freq * i as f64 / fs + phase).sin();
        }
    }
    if noise.hf_noise_std > 0.0 {
        for s in samples.iter_mut() {
            *s += noise.hf_noise_std * std_normal.sample(rng);
        }
    }
    if let Some((amp, onset)) = noise.step {
        let start = ((onset * fs).round().max(0.0) as usize).min(samples.len());
        samples[start..].iter_mut().for_each(|s| *s += amp);
    }
    if let Some((a, b)) = noise.dropout {
        let lo = ((a * fs).round().max(0.0) as usize).min(samples.len());
        let hi = ((b * fs).round().max(0.0) as usize).min(samples.len());
        samples[lo..hi.max(lo)].iter_mut().for_each(|s| *s = 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(bpm: f64, fs: f64, duration_s: f64) -> SynthSpec {
        SynthSpec {
            fs,
            duration_s,
            bpm,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn beat_count_follows_rate() {
        let (_, gt) = generate_ecg(&clean(60.0, 130.0, 10.0), 1).unwrap();
        assert!((9..=11).contains(&gt.r_peaks.len()), "{}", gt.r_peaks.len());
        assert!(gt.labels.iter().all(|c| *c == AamiClass::N));
    }

    #[test]
    fn deterministic_per_seed() {
        let mut spec = clean(75.0, 130.0, 20.0);
        spec.noise.hf_noise_std = 0.05;
        spec.abnormal_beat_rate = 0.3;
        let a = generate_ecg(&spec, 9).unwrap();
        let b = generate_ecg(&spec, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_ecg(&spec, 10).unwrap();
        assert_ne!(a.0.samples, c.0.samples);
    }

    #[test]
    fn abnormal_rate_is_binomial() {
        // 100 beats at rate 0.2: mean 20, sd 4; allow 3 sd.
        let mut spec = clean(60.0, 130.0, 100.5);
        spec.abnormal_beat_rate = 0.2;
        for seed in 0..5 {
            let (_, gt) = generate_ecg(&spec, seed).unwrap();
            let abnormal = gt.labels.iter().filter(|c| c.is_abnormal()).count();
            assert!((8..=32).contains(&abnormal), "seed {seed}: {abnormal}");
        }
    }

    #[test]
    fn r_peaks_are_local_maxima() {
        let mut spec = clean(100.0, 130.0, 30.0);
        spec.abnormal_beat_rate = 0.3;
        let (sig, gt) = generate_ecg(&spec, 4).unwrap();
        let x = &sig.samples;
        for &r in &gt.r_peaks {
            let lo = r.saturating_sub(8);
            let hi = (r + 8).min(x.len() - 1);
            let argmax = (lo..=hi).max_by(|a, b| x[*a].total_cmp(&x[*b])).unwrap();
            assert!(argmax.abs_diff(r) <= 2, "peak {r} vs local max {argmax}");
        }
    }

    #[test]
    fn forced_placement_and_spacing() {
        let mut spec = clean(150.0, 130.0, 20.0);
        spec.forced_beats = vec![(5, AamiClass::V), (9, AamiClass::S)];
        let (_, gt) = generate_ecg(&spec, 2).unwrap();
        assert_eq!(gt.labels[5], AamiClass::V);
        assert_eq!(gt.labels[9], AamiClass::S);
        assert_eq!(gt.labels.iter().filter(|c| c.is_abnormal()).count(), 2);
        let min_gap = (MIN_RR_S * 130.0).floor() as usize;
        assert!(gt.r_peaks.windows(2).all(|w| w[1] - w[0] >= min_gap));
    }

    #[test]
    fn rejects_out_of_range_rate() {
        assert!(generate_ecg(&clean(200.0, 130.0, 10.0), 0).is_err());
        assert!(generate_ecg(&clean(20.0, 130.0, 10.0), 0).is_err());
    }

    #[test]
    fn dropout_zeroes_interval() {
        let mut spec = clean(70.0, 130.0, 20.0);
        spec.noise.dropout = Some((10.0, 20.0));
        let (sig, _) = generate_ecg(&spec, 3).unwrap();
        assert!(sig.samples[1300..].iter().all(|v| *v == 0.0));
        assert!(sig.samples[..1300].iter().any(|v| *v != 0.0));
    }
}
