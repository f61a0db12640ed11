//! Seeded synthetic corpora: labeled beats, labeled records and SQA windows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pipeline::front_end;
use super::records::LabeledRecord;
use crate::aami::AamiClass;
use crate::error::Result;
use crate::qrs::{segment_beats, BeatSegment, RPeakList, SEGMENT_FS};
use crate::signal::{generate_ecg, EcgSignal, Morphology, NoiseSpec, SynthSpec, Wave};

/// Artifact families injected into corrupted SQA windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    /// DC step of 2 to 6 mV that persists to the window end.
    Step,
    /// 4 to 6 s of zeros (electrode off).
    Dropout,
    /// The whole window pinned at one level.
    Flatline,
    /// 3 to 10 mV baseline wander at 0.1 to 0.5 Hz.
    Wander,
}

impl Corruption {
    pub const ALL: [Corruption; 4] = [
        Corruption::Step,
        Corruption::Dropout,
        Corruption::Flatline,
        Corruption::Wander,
    ];
}

/// Applies `kind` to a window in place; times are relative to the slice.
pub fn corrupt(samples: &mut [f64], fs: f64, kind: Corruption, rng: &mut ChaCha8Rng) {
    let n = samples.len();
    let dur = n as f64 / fs;
    let at = |t: f64| ((t * fs).round().max(0.0) as usize).min(n);
    match kind {
        Corruption::Step => {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let amp = sign * rng.random_range(2.0..6.0);
            let onset = rng.random_range(0.1..0.9) * dur;
            samples[at(onset)..].iter_mut().for_each(|s| *s += amp);
        }
        Corruption::Dropout => {
            let len = rng.random_range(0.4..0.6) * dur;
            let start = rng.random_range(0.0..(dur - len).max(f64::MIN_POSITIVE));
            samples[at(start)..at(start + len)]
                .iter_mut()
                .for_each(|s| *s = 0.0);
        }
        Corruption::Flatline => {
            let level = rng.random_range(-0.5..0.5);
            samples.iter_mut().for_each(|s| *s = level);
        }
        Corruption::Wander => {
            let amp = rng.random_range(3.0..10.0);
            let freq = rng.random_range(0.1..0.5);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            for (i, s) in samples.iter_mut().enumerate() {
                *s += amp * (std::f64::consts::TAU * freq * i as f64 / fs + phase).sin();
            }
        }
    }
}

/// A clean recording spec with mild, realistic imperfections.
fn clean_spec(rng: &mut ChaCha8Rng, fs: f64, duration_s: f64) -> SynthSpec {
    SynthSpec {
        fs,
        duration_s,
        bpm: rng.random_range(60.0..110.0),
        noise: NoiseSpec {
            baseline_wander: Some((rng.random_range(0.0..0.15), rng.random_range(0.05..0.4))),
            hf_noise_std: rng.random_range(0.0..0.03),
            ..NoiseSpec::default()
        },
        ..SynthSpec::default()
    }
}

/// One 10 s window of the SQA corpus, at 360 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct SqaSample {
    pub signal: EcgSignal,
    /// `None` for clean windows.
    pub corruption: Option<Corruption>,
}

/// `n_clean` clean windows followed by `n_corrupt` corrupted ones, the
/// artifact families cycling in order.
pub fn sqa_corpus(n_clean: usize, n_corrupt: usize, seed: u64) -> Result<Vec<SqaSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_clean + n_corrupt);
    for i in 0..n_clean + n_corrupt {
        let spec = clean_spec(&mut rng, 360.0, 10.0);
        let (mut sig, _) = generate_ecg(&spec, rng.random())?;
        let corruption = (i >= n_clean).then(|| Corruption::ALL[(i - n_clean) % 4]);
        if let Some(kind) = corruption {
            corrupt(&mut sig.samples, sig.fs, kind, &mut rng);
        }
        out.push(SqaSample {
            signal: sig,
            corruption,
        });
    }
    Ok(out)
}

fn scaled(w: Wave, amp: f64, width: f64) -> Wave {
    Wave {
        amplitude: w.amplitude * amp,
        width_s: w.width_s * width,
        offset_s: w.offset_s,
    }
}

/// Randomised spec for one record of the beat corpus: heart rate, normal
/// morphology, noise and the ectopic rate all vary per record.
fn beat_record_spec(rng: &mut ChaCha8Rng, duration_s: f64) -> SynthSpec {
    let m = Morphology::NORMAL;
    let width = rng.random_range(0.9..1.1);
    let morphology = Morphology {
        p: scaled(m.p, rng.random_range(0.7..1.3), width),
        q: scaled(m.q, rng.random_range(0.7..1.3), width),
        r: scaled(m.r, 1.0, width),
        s: scaled(m.s, rng.random_range(0.8..1.2), width),
        t: scaled(m.t, rng.random_range(0.7..1.3), rng.random_range(0.9..1.1)),
    };
    SynthSpec {
        fs: 360.0,
        duration_s,
        bpm: rng.random_range(55.0..110.0),
        morphology,
        abnormal_beat_rate: 0.5,
        amplitude_jitter: 0.06,
        rr_jitter: 0.02,
        noise: NoiseSpec {
            baseline_wander: Some((rng.random_range(0.0..0.2), rng.random_range(0.05..0.4))),
            hf_noise_std: rng.random_range(0.005..0.03),
            ..NoiseSpec::default()
        },
        ..SynthSpec::default()
    }
}

/// Converts generator ground truth into a labeled record.
pub fn labeled_record(id: &str, spec: &SynthSpec, seed: u64) -> Result<LabeledRecord> {
    let (signal, truth) = generate_ecg(spec, seed)?;
    Ok(LabeledRecord {
        id: id.to_string(),
        signal,
        beats: truth.r_peaks.into_iter().zip(truth.labels).collect(),
    })
}

/// Front end with the default band plus segmentation at the reference
/// positions.
pub fn segment_record(rec: &LabeledRecord) -> Result<Vec<BeatSegment>> {
    segment_record_with(rec, 1.0, 50.0, None)
}

pub fn segment_record_with(
    rec: &LabeledRecord,
    band_low_hz: f64,
    band_high_hz: f64,
    order: Option<usize>,
) -> Result<Vec<BeatSegment>> {
    let filtered = front_end(&rec.signal, band_low_hz, band_high_hz, order)?;
    let scale = SEGMENT_FS / rec.signal.fs;
    let mut positions: Vec<(usize, AamiClass)> = Vec::new();
    for &(i, c) in &rec.beats {
        let p = (i as f64 * scale).round() as usize;
        if positions.last().is_none_or(|&(q, _)| q < p) {
            positions.push((p, c));
        }
    }
    let peaks = RPeakList {
        indices: positions.iter().map(|&(p, _)| p).collect(),
        fs: SEGMENT_FS,
    };
    let mut beats = segment_beats(&filtered, &peaks)?;
    let mut j = 0;
    for b in &mut beats {
        while positions[j].0 != b.r_index {
            j += 1;
        }
        b.label = Some(positions[j].1);
    }
    Ok(beats)
}

/// Randomised labeled records with roughly half ectopic beats.
pub fn synthetic_records(count: usize, duration_s: f64, seed: u64) -> Result<Vec<LabeledRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let spec = beat_record_spec(&mut rng, duration_s);
            labeled_record(&format!("syn{i:03}"), &spec, rng.random())
        })
        .collect()
}

/// A class-balanced beat set: `per_class` beats of each of N, S, V and F,
/// drawn from as many randomised records as needed, in shuffled order.
pub fn balanced_beats(per_class: usize, seed: u64) -> Result<Vec<BeatSegment>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: [Vec<BeatSegment>; 4] = Default::default();
    // Cap what one record may give each class so every class spans several
    // simulated patients.
    let cap = per_class.div_ceil(8).max(2);
    while buckets.iter().any(|b| b.len() < per_class) {
        let spec = beat_record_spec(&mut rng, 60.0);
        let rec = labeled_record("", &spec, rng.random())?;
        let mut taken = [0usize; 4];
        for beat in segment_record(&rec)? {
            let Some(k) = beat.label.and_then(AamiClass::head2_index) else {
                continue;
            };
            if buckets[k].len() < per_class && taken[k] < cap {
                buckets[k].push(beat);
                taken[k] += 1;
            }
        }
    }
    let mut all: Vec<BeatSegment> = buckets.into_iter().flatten().collect();
    for i in (1..all.len()).rev() {
        let j = rng.random_range(0..=i);
        all.swap(i, j);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_counts() {
        let beats = balanced_beats(10, 3).unwrap();
        assert_eq!(beats.len(), 40);
        for c in AamiClass::CLASSIFIED {
            assert_eq!(beats.iter().filter(|b| b.label == Some(c)).count(), 10);
        }
        assert!(beats
            .iter()
            .all(|b| b.window.len() == crate::qrs::SEGMENT_LEN));
    }

    #[test]
    fn sqa_corpus_layout() {
        let c = sqa_corpus(3, 8, 1).unwrap();
        assert_eq!(c.len(), 11);
        assert!(c[..3].iter().all(|s| s.corruption.is_none()));
        assert_eq!(c[3].corruption, Some(Corruption::Step));
        assert_eq!(c[10].corruption, Some(Corruption::Wander));
        assert_eq!(c[0].signal.len(), 3600);
        assert_eq!(sqa_corpus(3, 8, 1).unwrap(), c);
    }
}
