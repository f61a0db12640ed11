//! Communication energy of raw streaming against the edge/fog pipeline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{corrupt, Corruption};
use crate::edge::{run_edge_session, EdgeConfig, EdgeReport};
use crate::error::{Error, Result};
use crate::link::{FogNode, LinkStats, LoopbackLink, MsgType, HEADER_LEN, PREFIX_LEN};
use crate::nn::{ModelGraph, INPUT_SHAPE};
use crate::signal::{generate_ecg, EcgSignal, NoiseSpec, SynthSpec};

/// What an abnormal beat costs on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadMode {
    /// The 27x5 cut activation, as the pipeline sends it.
    FeatureMap,
    /// The 105-sample beat at `sample_bits` per sample.
    RawBeat,
}

/// Radio and compute cost model. The default per-bit figures are
/// order-of-magnitude placeholders, not measurements; supply real values
/// through the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// Transmit cost per technology in microjoules per bit.
    pub uj_per_bit: BTreeMap<String, f64>,
    pub compute_nj_per_mac: f64,
    pub sample_bits: u32,
    /// Rate of the raw stream in the all-raw case.
    pub raw_fs: f64,
    /// Heart-rate values carried per frame (1 sends one frame per beat).
    pub hr_per_frame: usize,
    pub payload_mode: PayloadMode,
}

impl Default for EnergyModel {
    fn default() -> Self {
        let uj_per_bit = [("3g", 1.0), ("ble", 0.05), ("lte", 0.5), ("wifi", 0.1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self {
            uj_per_bit,
            compute_nj_per_mac: 1.0,
            sample_bits: 16,
            raw_fs: 360.0,
            hr_per_frame: 1,
            payload_mode: PayloadMode::FeatureMap,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        if self.uj_per_bit.is_empty() {
            return Err(Error::param("energy model needs at least one technology"));
        }
        if let Some((k, v)) = self
            .uj_per_bit
            .iter()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::param(format!(
                "uj_per_bit for {k} must be positive, got {v}"
            )));
        }
        if !(self.compute_nj_per_mac >= 0.0) || !(self.raw_fs > 0.0) {
            return Err(Error::param(
                "compute_nj_per_mac must be >= 0 and raw_fs > 0",
            ));
        }
        if self.sample_bits == 0 || self.hr_per_frame == 0 {
            return Err(Error::param(
                "sample_bits and hr_per_frame must be positive",
            ));
        }
        Ok(())
    }

    /// Bits the edge transmits for the given traffic under this model's
    /// framing options.
    pub fn transmitted_bits(&self, traffic: &TrafficSummary) -> u64 {
        let overhead = (PREFIX_LEN + HEADER_LEN) as u64;
        let mut bytes = 0u64;
        for (name, &n) in &traffic.frames {
            let frame_bytes = traffic.bytes.get(name).copied().unwrap_or(0);
            bytes += if name == MsgType::HeartRate.name() {
                let per = self.hr_per_frame as u64;
                n.div_ceil(per) * overhead + n * MsgType::HeartRate.payload_len() as u64
            } else if name == MsgType::FeatureMap.name()
                && self.payload_mode == PayloadMode::RawBeat
            {
                let beat = (INPUT_SHAPE.0 as u64 * u64::from(self.sample_bits)).div_ceil(8);
                n * (overhead + beat)
            } else {
                frame_bytes
            };
        }
        bytes * 8
    }

    /// Raw streaming for `duration_s` on one technology.
    pub fn raw_stream_joules(&self, duration_s: f64, uj_per_bit: f64) -> f64 {
        duration_s * self.raw_fs * f64::from(self.sample_bits) * uj_per_bit * 1e-6
    }
}

/// Frames and bytes the edge sent, by message type, plus edge compute.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficSummary {
    pub frames: BTreeMap<String, u64>,
    pub bytes: BTreeMap<String, u64>,
    pub edge_macs: u64,
}

impl TrafficSummary {
    pub fn from_stats(stats: &LinkStats, edge_macs: u64) -> Result<Self> {
        let mut t = TrafficSummary {
            edge_macs,
            ..Default::default()
        };
        for (&name, &bytes) in &stats.sent_by_type {
            let ty = [
                MsgType::Hello,
                MsgType::HeartRate,
                MsgType::FeatureMap,
                MsgType::Classification,
                MsgType::RateChange,
                MsgType::NoiseReport,
            ]
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::format(format!("unknown message type {name}")))?;
            t.frames
                .insert(name.to_string(), bytes / ty.frame_len() as u64);
            t.bytes.insert(name.to_string(), bytes);
        }
        Ok(t)
    }

    pub fn from_report(report: &EdgeReport) -> Result<Self> {
        Self::from_stats(&report.link, report.edge_macs)
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes.values().sum()
    }
}

/// Minutes of each segment kind in a one-session scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub clean_normal_min: f64,
    pub noisy_min: f64,
    pub arrhythmic_min: f64,
}

impl CaseSpec {
    /// One hour of clean signal, streamed raw.
    pub const CASE_I: CaseSpec = CaseSpec {
        clean_normal_min: 60.0,
        noisy_min: 0.0,
        arrhythmic_min: 0.0,
    };
    pub const CASE_II: CaseSpec = CaseSpec {
        clean_normal_min: 50.0,
        noisy_min: 10.0,
        arrhythmic_min: 0.0,
    };
    pub const CASE_III: CaseSpec = CaseSpec {
        clean_normal_min: 40.0,
        noisy_min: 10.0,
        arrhythmic_min: 10.0,
    };

    pub fn by_name(name: &str) -> Result<CaseSpec> {
        match name.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Self::CASE_I),
            "II" | "2" => Ok(Self::CASE_II),
            "III" | "3" => Ok(Self::CASE_III),
            _ => Err(Error::param(format!(
                "unknown case {name:?}; expected I, II or III"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.clean_normal_min, self.noisy_min, self.arrhythmic_min];
        if all.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(Error::param("segment durations must be non-negative"));
        }
        Ok(())
    }

    pub fn total_s(&self) -> f64 {
        60.0 * (self.clean_normal_min + self.noisy_min + self.arrhythmic_min)
    }
}

/// Knobs of the simulated recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub fs: f64,
    pub bpm: f64,
    /// Ectopic beat fraction inside arrhythmic segments.
    pub arrhythmic_rate: f64,
    pub hf_noise_std: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            fs: 360.0,
            bpm: 72.0,
            arrhythmic_rate: 0.25,
            hf_noise_std: 0.01,
        }
    }
}

/// Builds the case recording: clean, then arrhythmic, then noisy segments.
/// Every 10 s window of the noisy segment carries one artifact.
pub fn case_signal(case: &CaseSpec, sim: &SimulationConfig, seed: u64) -> Result<EcgSignal> {
    case.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let segments = [
        (case.clean_normal_min, 0.0, false),
        (case.arrhythmic_min, sim.arrhythmic_rate, false),
        (case.noisy_min, 0.0, true),
    ];
    for (minutes, rate, noisy) in segments {
        if minutes <= 0.0 {
            continue;
        }
        let spec = SynthSpec {
            fs: sim.fs,
            duration_s: minutes * 60.0,
            bpm: sim.bpm,
            abnormal_beat_rate: rate,
            rr_jitter: 0.02,
            noise: NoiseSpec {
                hf_noise_std: sim.hf_noise_std,
                baseline_wander: Some((0.05, 0.2)),
                ..NoiseSpec::default()
            },
            ..SynthSpec::default()
        };
        let (mut sig, _) = generate_ecg(&spec, rng.random())?;
        if noisy {
            let win = (10.0 * sim.fs).round() as usize;
            for (k, chunk) in sig.samples.chunks_mut(win).enumerate() {
                corrupt(chunk, sim.fs, Corruption::ALL[k % 4], &mut rng);
            }
        }
        samples.extend(sig.samples);
    }
    if samples.is_empty() {
        return Ok(EcgSignal {
            samples,
            fs: sim.fs,
            start_index: 0,
        });
    }
    EcgSignal::new(samples, sim.fs)
}

/// Runs one simulated session of `case` through the edge and an in-process
/// fog node. Deterministic for a fixed seed.
pub fn simulate_case(
    case: &CaseSpec,
    model: &ModelGraph<f32>,
    edge: &EdgeConfig,
    sim: &SimulationConfig,
    seed: u64,
) -> Result<EdgeReport> {
    let sig = case_signal(case, sim, seed)?;
    let node = Arc::new(FogNode::new(model.clone())?);
    let mut link = LoopbackLink::new(node);
    if sig.is_empty() {
        return Ok(EdgeReport {
            session_id: edge.session_id,
            windows: Vec::new(),
            beats: Vec::new(),
            replies: Vec::new(),
            rate_changes: Vec::new(),
            link: LinkStats::default(),
            edge_macs: 0,
            dropped: 0,
            undelivered: 0,
        });
    }
    run_edge_session(&sig, model, edge, &mut link, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub technology: String,
    pub uj_per_bit: f64,
    pub case_i_j: f64,
    pub case_ii_j: f64,
    pub case_iii_j: f64,
    /// `None` when the divisor is zero.
    pub ratio_i_ii: Option<f64>,
    pub ratio_i_iii: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub case_i_bits: u64,
    pub case_ii_bits: u64,
    pub case_iii_bits: u64,
    pub case_ii_compute_j: f64,
    pub case_iii_compute_j: f64,
    pub rows: Vec<EnergyRow>,
}

impl EnergyReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "technology,uj_per_bit,case_i_j,case_ii_j,case_iii_j,ratio_i_ii,ratio_i_iii\n",
        );
        let ratio = |r: Option<f64>| r.map_or("undefined".to_string(), |v| format!("{v:.3}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6},{},{}",
                r.technology,
                r.uj_per_bit,
                r.case_i_j,
                r.case_ii_j,
                r.case_iii_j,
                ratio(r.ratio_i_ii),
                ratio(r.ratio_i_iii)
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "case I bits     {}", self.case_i_bits);
        let _ = writeln!(s, "case II bits    {}", self.case_ii_bits);
        let _ = writeln!(s, "case III bits   {}", self.case_iii_bits);
        let _ = writeln!(s, "case II compute {:.6} J", self.case_ii_compute_j);
        let _ = writeln!(s, "case III compute {:.6} J", self.case_iii_compute_j);
        let _ = writeln!(s);
        s.push_str(&self.to_csv());
        s
    }
}

/// Case I is closed form (`raw_case` streamed raw for its whole duration);
/// Cases II and III come from the traffic of simulated or recorded sessions.
pub fn energy_report(
    model: &EnergyModel,
    raw_case: &CaseSpec,
    case_ii: &TrafficSummary,
    case_iii: &TrafficSummary,
) -> Result<EnergyReport> {
    model.validate()?;
    raw_case.validate()?;
    let dur = raw_case.total_s();
    let bits_i = (dur * model.raw_fs).round() as u64 * u64::from(model.sample_bits);
    let bits_ii = model.transmitted_bits(case_ii);
    let bits_iii = model.transmitted_bits(case_iii);
    let ratio = |a: f64, b: f64| (b > 0.0).then(|| a / b);
    let rows = model
        .uj_per_bit
        .iter()
        .map(|(tech, &uj)| {
            let e1 = model.raw_stream_joules(dur, uj);
            let e2 = bits_ii as f64 * uj * 1e-6;
            let e3 = bits_iii as f64 * uj * 1e-6;
            EnergyRow {
                technology: tech.clone(),
                uj_per_bit: uj,
                case_i_j: e1,
                case_ii_j: e2,
                case_iii_j: e3,
                ratio_i_ii: ratio(e1, e2),
                ratio_i_iii: ratio(e1, e3),
            }
        })
        .collect();
    Ok(EnergyReport {
        case_i_bits: bits_i,
        case_ii_bits: bits_ii,
        case_iii_bits: bits_iii,
        case_ii_compute_j: case_ii.edge_macs as f64 * model.compute_nj_per_mac * 1e-9,
        case_iii_compute_j: case_iii.edge_macs as f64 * model.compute_nj_per_mac * 1e-9,
        rows,
    })
}
