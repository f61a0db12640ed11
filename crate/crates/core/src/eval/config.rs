//! `key=value` settings file covering every tunable default.
//!
//! Blank lines and `#` comments are ignored. Keys are dotted, e.g.
//! `sqa.std_threshold=0.2` or `energy.uj_per_bit.wifi=0.1`. Unknown keys
//! and unparsable values are errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::energy::{EnergyModel, PayloadMode, SimulationConfig};
use super::pipeline::{BeatSource, EvalConfig};
use crate::edge::EdgeConfig;
use crate::error::{Error, Result};
use crate::link::FogConfig;
use crate::nn::TrainConfig;
use crate::sqa::Polarity;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub edge: EdgeConfig,
    pub eval: EvalConfig,
    pub train: TrainConfig,
    pub energy: EnergyModel,
    pub fog: FogConfig,
    pub sim: SimulationConfig,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::param(format!("{key}: cannot parse {v:?}")))
}

fn parse_opt<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v.eq_ignore_ascii_case("none") || v.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

impl Settings {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        s.apply_text(text)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::param(format!("config line {}: expected key=value", lineno + 1))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.edge.validate()?;
        self.eval.sqa.validate()?;
        self.eval.gates.validate()?;
        self.train.validate()?;
        self.energy.validate()
    }

    /// Sets one key. Filter and SQA keys apply to both the edge runtime and
    /// the evaluator.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        if let Some(tech) = key.strip_prefix("energy.uj_per_bit.") {
            self.energy
                .uj_per_bit
                .insert(tech.to_string(), parse(key, v)?);
            return Ok(());
        }
        let e = &mut self.edge;
        let t = &mut self.train;
        match key {
            "filter.low_hz" => {
                e.band_low_hz = parse(key, v)?;
                self.eval.band_low_hz = e.band_low_hz;
            }
            "filter.high_hz" => {
                e.band_high_hz = parse(key, v)?;
                self.eval.band_high_hz = e.band_high_hz;
            }
            "filter.order" => {
                e.filter_order = parse_opt(key, v)?;
                self.eval.filter_order = e.filter_order;
            }
            k if k.starts_with("sqa.") => {
                let q = &mut e.sqa;
                match &k[4..] {
                    "window_s" => q.window_s = parse(key, v)?,
                    "lambda_absence" => q.lambda_absence = parse(key, v)?,
                    "std_threshold" => q.std_threshold = parse(key, v)?,
                    "mov_window_len" => q.mov_window_len = parse_opt(key, v)?,
                    "overlap_frac" => q.overlap_frac = parse(key, v)?,
                    "polarity" => {
                        q.polarity = match v {
                            "as_stated" => Polarity::AsStated,
                            "inverted" => Polarity::Inverted,
                            _ => {
                                return Err(Error::param(format!(
                                    "{key}: expected as_stated or inverted"
                                )))
                            }
                        }
                    }
                    _ => return Err(Error::param(format!("unknown config key {key:?}"))),
                }
                self.eval.sqa = q.clone();
            }
            "gate.hrv_threshold" => {
                e.gates.hrv_threshold = parse(key, v)?;
                self.eval.gates = e.gates;
            }
            "gate.corr_threshold" => {
                e.gates.corr_threshold = parse(key, v)?;
                self.eval.gates = e.gates;
            }
            "gate.template_beats" => {
                e.template_beats = parse(key, v)?;
                self.eval.template_beats = e.template_beats;
            }
            "rate.low_fs" => e.rate.low_fs = parse(key, v)?,
            "rate.full_fs" => e.rate.full_fs = parse(key, v)?,
            "rate.window" => e.rate.window = parse(key, v)?,
            "edge.adaptive_rate" => e.adaptive_rate = parse(key, v)?,
            "edge.session_id" => e.session_id = parse(key, v)?,
            "edge.context_s" => e.context_s = parse(key, v)?,
            "edge.outbox_capacity" => e.outbox_capacity = parse(key, v)?,
            "train.beta1" => t.beta1 = parse(key, v)?,
            "train.beta2" => t.beta2 = parse(key, v)?,
            "train.lr" => t.lr = parse(key, v)?,
            "train.lr_drop_factor" => t.lr_drop_factor = parse(key, v)?,
            "train.plateau_epochs" => t.plateau_epochs = parse(key, v)?,
            "train.early_stop_epochs" => t.early_stop_epochs = parse(key, v)?,
            "train.max_epochs" => t.max_epochs = parse(key, v)?,
            "train.dropout_p" => t.dropout_p = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.seed" => t.seed = parse(key, v)?,
            "train.class_weighted" => t.class_weighted = parse(key, v)?,
            "energy.compute_nj_per_mac" => self.energy.compute_nj_per_mac = parse(key, v)?,
            "energy.sample_bits" => self.energy.sample_bits = parse(key, v)?,
            "energy.raw_fs" => self.energy.raw_fs = parse(key, v)?,
            "energy.hr_per_frame" => self.energy.hr_per_frame = parse(key, v)?,
            "energy.payload_mode" => {
                self.energy.payload_mode = match v {
                    "feature_map" => PayloadMode::FeatureMap,
                    "raw_beat" => PayloadMode::RawBeat,
                    _ => {
                        return Err(Error::param(format!(
                            "{key}: expected feature_map or raw_beat"
                        )))
                    }
                }
            }
            "fog.listen" => self.fog.listen = v.to_string(),
            "fog.weights" => self.fog.weights = PathBuf::from(v),
            "fog.max_sessions" => self.fog.max_sessions = parse(key, v)?,
            "fog.log" => self.fog.log_path = Some(PathBuf::from(v)),
            "eval.use_sqa" => self.eval.use_sqa = parse(key, v)?,
            "eval.use_indicators" => self.eval.use_indicators = parse(key, v)?,
            "eval.beat_source" => {
                self.eval.beat_source = match v {
                    "annotations" => BeatSource::Annotations,
                    "detector" => BeatSource::Detector,
                    _ => {
                        return Err(Error::param(format!(
                            "{key}: expected annotations or detector"
                        )))
                    }
                }
            }
            "eval.match_tolerance_s" => self.eval.match_tolerance_s = parse(key, v)?,
            "sim.fs" => self.sim.fs = parse(key, v)?,
            "sim.bpm" => self.sim.bpm = parse(key, v)?,
            "sim.arrhythmic_rate" => self.sim.arrhythmic_rate = parse(key, v)?,
            "sim.hf_noise_std" => self.sim.hf_noise_std = parse(key, v)?,
            _ => return Err(Error::param(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_everywhere() {
        let s = Settings::from_text(
            "# comment\nsqa.lambda_absence = 0.1\nfilter.order=200\nenergy.uj_per_bit.wifi=0.2\n\ntrain.max_epochs=7 # trailing\nsqa.polarity=inverted\n",
        )
        .unwrap();
        assert_eq!(s.edge.sqa.lambda_absence, 0.1);
        assert_eq!(s.eval.sqa.lambda_absence, 0.1);
        assert_eq!(s.eval.sqa.polarity, Polarity::Inverted);
        assert_eq!(s.edge.filter_order, Some(200));
        assert_eq!(s.eval.filter_order, Some(200));
        assert_eq!(s.energy.uj_per_bit["wifi"], 0.2);
        assert_eq!(s.train.max_epochs, 7);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(Settings::from_text("bogus.key=1").is_err());
        assert!(Settings::from_text("train.lr").is_err());
        assert!(Settings::from_text("train.lr=fast").is_err());
        assert!(Settings::from_text("energy.uj_per_bit.wifi=-1").is_err());
    }
}
