//! Scores the edge gate and the fog classifier over labeled records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionCounts, ConfusionMatrix, Metrics};
use super::records::LabeledRecord;
use crate::aami::AamiClass;
use crate::edge::{decide_with, BeatTemplate, GateConfig};
use crate::error::{Error, Result};
use crate::nn::{ModelGraph, Tensor, CUT_SHAPE, INPUT_SHAPE};
use crate::qrs::{detect_rpeaks, segment_beats, BeatSegment, RPeakList, SEGMENT_FS};
use crate::signal::{design_bandpass, filter_signal, resample, EcgSignal};
use crate::sqa::{grade_record, SqaConfig};

/// Resamples to the segmentation rate and bandpasses.
pub fn front_end(
    sig: &EcgSignal,
    band_low_hz: f64,
    band_high_hz: f64,
    order: Option<usize>,
) -> Result<EcgSignal> {
    let at_rate = if (sig.fs - SEGMENT_FS).abs() > 1e-9 {
        resample(sig, SEGMENT_FS)?
    } else {
        sig.clone()
    };
    let filt = design_bandpass(SEGMENT_FS, band_low_hz, band_high_hz, order)?;
    filter_signal(&at_rate, &filt)
}

/// The two halves of a split classifier as seen by the evaluator.
///
/// Beats arrive with their reference label set so that a ground-truth
/// classifier can be plugged in; real models must ignore it.
pub trait SplitClassifier {
    /// Head-1 probabilities `[normal, abnormal]` and the cut activation.
    fn edge(&self, beat: &BeatSegment) -> Result<([f64; 2], Vec<f32>)>;
    /// Head-2 probabilities in N, S, V, F order.
    fn fog(&self, beat: &BeatSegment, cut: &[f32]) -> Result<[f64; 4]>;
}

impl SplitClassifier for ModelGraph<f32> {
    fn edge(&self, beat: &BeatSegment) -> Result<([f64; 2], Vec<f32>)> {
        let x = Tensor::from_f64(vec![INPUT_SHAPE.0, INPUT_SHAPE.1], &beat.window)?;
        let (h1, cut) = self.forward_edge(&x)?;
        Ok(([h1[0], h1[1]], cut.into_data()))
    }

    fn fog(&self, _beat: &BeatSegment, cut: &[f32]) -> Result<[f64; 4]> {
        let t = Tensor::new(vec![CUT_SHAPE.0, CUT_SHAPE.1], cut.to_vec())?;
        let p = self.forward_fog(&t)?;
        Ok([p[0], p[1], p[2], p[3]])
    }
}

/// Answers with the reference label. Useful for checking the plumbing.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruthClassifier;

impl SplitClassifier for GroundTruthClassifier {
    fn edge(&self, beat: &BeatSegment) -> Result<([f64; 2], Vec<f32>)> {
        let abnormal = beat.label.is_some_and(AamiClass::is_abnormal);
        let p = if abnormal { [0.0, 1.0] } else { [1.0, 0.0] };
        Ok((p, vec![0.0; CUT_SHAPE.0 * CUT_SHAPE.1]))
    }

    fn fog(&self, beat: &BeatSegment, _cut: &[f32]) -> Result<[f64; 4]> {
        let mut p = [0.0; 4];
        let k = beat
            .label
            .and_then(AamiClass::head2_index)
            .ok_or_else(|| Error::param("beat has no classifiable label"))?;
        p[k] = 1.0;
        Ok(p)
    }
}

/// Where beat positions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeatSource {
    /// Reference annotation positions.
    Annotations,
    /// Detected peaks, matched to annotations within a tolerance.
    Detector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub filter_order: Option<usize>,
    pub sqa: SqaConfig,
    /// Exclude beats in windows graded unacceptable.
    pub use_sqa: bool,
    /// Apply the HRV and template gates on top of head 1.
    pub use_indicators: bool,
    pub gates: GateConfig,
    pub template_beats: usize,
    pub beat_source: BeatSource,
    pub match_tolerance_s: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            band_low_hz: 1.0,
            band_high_hz: 50.0,
            filter_order: None,
            sqa: SqaConfig::default(),
            use_sqa: true,
            use_indicators: true,
            gates: GateConfig::default(),
            template_beats: 20,
            beat_source: BeatSource::Annotations,
            match_tolerance_s: 0.15,
        }
    }
}

/// Outcome of an evaluation run.
///
/// Every labeled beat lands in exactly one of `excluded` (by reason),
/// `edge_normal` (true normal kept on the edge), `misrouted` (true abnormal
/// kept on the edge) or `forwarded` (sent to the fog).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    pub labeled: usize,
    pub excluded: BTreeMap<String, usize>,
    pub edge_normal: usize,
    pub misrouted: usize,
    pub misrouted_by_class: BTreeMap<AamiClass, usize>,
    pub forwarded: usize,
    /// Layer-2 gate, abnormal as the positive class.
    pub binary: ConfusionCounts,
    /// Head 2 on every classified beat, bypassing the gate.
    pub head2: ConfusionMatrix,
    /// The deployed path: beats kept on the edge count as N.
    pub end_to_end: ConfusionMatrix,
}

impl EvalReport {
    pub fn classified(&self) -> usize {
        self.edge_normal + self.misrouted + self.forwarded
    }

    pub fn excluded_total(&self) -> usize {
        self.excluded.values().sum()
    }

    /// True when every labeled beat is accounted for exactly once.
    pub fn is_conserved(&self) -> bool {
        self.labeled == self.classified() + self.excluded_total()
    }

    pub fn binary_metrics(&self) -> Metrics {
        self.binary.metrics()
    }

    pub fn veb(&self) -> Metrics {
        self.end_to_end.one_vs_rest(AamiClass::V).metrics()
    }

    pub fn sveb(&self) -> Metrics {
        self.end_to_end.one_vs_rest(AamiClass::S).metrics()
    }

    fn exclude(&mut self, reason: &str, n: usize) {
        if n > 0 {
            *self.excluded.entry(reason.to_string()).or_default() += n;
        }
    }

    /// Plain-text report.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "records              {}", self.records);
        let _ = writeln!(s, "labeled beats        {}", self.labeled);
        let _ = writeln!(s, "forwarded to fog     {}", self.forwarded);
        let _ = writeln!(s, "kept on edge         {}", self.edge_normal);
        let _ = writeln!(s, "misrouted            {}", self.misrouted);
        for (c, n) in &self.misrouted_by_class {
            let _ = writeln!(s, "{:<21}{n}", format!("  misrouted {c}"));
        }
        for (r, n) in &self.excluded {
            let _ = writeln!(s, "{:<21}{n}", format!("excluded ({r})"));
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "task,se,sp,ppv,acc");
        let rows = [
            ("normal_vs_abnormal", self.binary_metrics()),
            ("veb", self.veb()),
            ("sveb", self.sveb()),
        ];
        for (name, m) in rows {
            let _ = writeln!(s, "{name},{},{},{},{}", m.se, m.sp, m.ppv, m.acc);
        }
        let _ = writeln!(s, "head2_accuracy,{}", self.head2.accuracy());
        let _ = writeln!(s, "end_to_end_accuracy,{}", self.end_to_end.accuracy());
        for (title, cm) in [("head2", &self.head2), ("end_to_end", &self.end_to_end)] {
            let _ = writeln!(s);
            let _ = writeln!(s, "{title} truth\\pred,N,S,V,F");
            for (i, row) in cm.counts.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    AamiClass::CLASSIFIED[i],
                    row[0],
                    row[1],
                    row[2],
                    row[3]
                );
            }
        }
        s
    }
}

/// Builds segments at the beat positions, attaching labels. Beats that
/// cannot be placed are counted under an exclusion reason.
fn labeled_beats(
    filtered: &EcgSignal,
    rec: &LabeledRecord,
    cfg: &EvalConfig,
    report: &mut EvalReport,
) -> Result<Vec<BeatSegment>> {
    let scale = SEGMENT_FS / rec.signal.fs;
    let n = filtered.len();
    let mut positions: Vec<(usize, AamiClass)> = Vec::with_capacity(rec.beats.len());
    match cfg.beat_source {
        BeatSource::Annotations => {
            for &(i, c) in &rec.beats {
                let p = ((i as f64 * scale).round() as usize).min(n.saturating_sub(1));
                if positions.last().is_some_and(|&(q, _)| q == p) {
                    debug!(
                        "record {}: annotation at {i} collides after resampling",
                        rec.id
                    );
                    report.exclude("alignment", 1);
                    continue;
                }
                positions.push((p, c));
            }
        }
        BeatSource::Detector => {
            let peaks = detect_rpeaks(filtered)?;
            let tol = (cfg.match_tolerance_s * SEGMENT_FS).round() as usize;
            let mut used = vec![false; peaks.len()];
            for &(i, c) in &rec.beats {
                let target = (i as f64 * scale).round() as usize;
                let k = peaks.indices.partition_point(|&p| p < target);
                let best = [k.checked_sub(1), Some(k)]
                    .into_iter()
                    .flatten()
                    .filter(|&j| j < peaks.len() && !used[j])
                    .min_by_key(|&j| peaks.indices[j].abs_diff(target))
                    .filter(|&j| peaks.indices[j].abs_diff(target) <= tol);
                match best {
                    Some(j) => {
                        used[j] = true;
                        positions.push((peaks.indices[j], c));
                    }
                    None => {
                        debug!("record {}: no detection near annotation at {i}", rec.id);
                        report.exclude("undetected", 1);
                    }
                }
            }
            positions.sort_by_key(|&(p, _)| p);
        }
    }

    let peaks = RPeakList {
        indices: positions.iter().map(|&(p, _)| p).collect(),
        fs: SEGMENT_FS,
    };
    let mut beats = segment_beats(filtered, &peaks)?;
    let mut j = 0;
    for b in &mut beats {
        while positions[j].0 != b.r_index {
            j += 1;
        }
        b.label = Some(positions[j].1);
    }
    report.exclude("boundary", positions.len() - beats.len());
    Ok(beats)
}

/// Runs every record through the front end, the edge gate and the fog head
/// and tallies the outcome.
///
/// Per record: resample and bandpass, grade SQA windows, place beats, then
/// for each beat in time order run head 1 and the decision gates (building
/// the template from the first head-1-normal beats). Abnormal verdicts go to
/// head 2; normal verdicts stop on the edge and score as N end to end.
pub fn evaluate_pipeline(
    records: &[LabeledRecord],
    classifier: &dyn SplitClassifier,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.sqa.validate()?;
    if cfg.template_beats == 0 {
        return Err(Error::param("template_beats must be positive"));
    }
    let mut report = EvalReport::default();
    for rec in records {
        report.records += 1;
        report.labeled += rec.beats.len();
        let filtered = front_end(
            &rec.signal,
            cfg.band_low_hz,
            cfg.band_high_hz,
            cfg.filter_order,
        )?;
        let beats = labeled_beats(&filtered, rec, cfg, &mut report)?;

        let win = (cfg.sqa.window_s * SEGMENT_FS).round() as usize;
        let bad_windows: Vec<usize> = if cfg.use_sqa {
            grade_record(&filtered, &cfg.sqa)?
                .into_iter()
                .filter(|(_, v)| !v.is_acceptable())
                .map(|(s, _)| s / win)
                .collect()
        } else {
            Vec::new()
        };

        let mut template: Option<BeatTemplate> = None;
        let mut warmup: Vec<Vec<f64>> = Vec::new();
        for beat in &beats {
            let label = beat.label.expect("labels attached above");
            if label == AamiClass::Q {
                report.exclude("q", 1);
                continue;
            }
            if bad_windows.binary_search(&(beat.r_index / win)).is_ok() {
                report.exclude("noisy", 1);
                continue;
            }
            let (h1, cut) = classifier.edge(beat)?;
            let abnormal = if cfg.use_indicators {
                decide_with(beat, h1, template.as_ref(), &cfg.gates).is_abnormal()
            } else {
                h1[1] > h1[0]
            };
            if template.is_none() && h1[0] >= h1[1] {
                warmup.push(beat.window.clone());
                if warmup.len() == cfg.template_beats {
                    match BeatTemplate::from_windows(warmup.iter().map(Vec::as_slice)) {
                        Ok(t) => template = Some(t),
                        Err(e) => warn!("record {}: template rejected: {e}", rec.id),
                    }
                    warmup.clear();
                }
            }

            let p2 = classifier.fog(beat, &cut)?;
            let head2_class = argmax4(&p2);
            report.head2.record(label, head2_class);
            report.binary.record(label.is_abnormal(), abnormal);
            if abnormal {
                report.forwarded += 1;
                report.end_to_end.record(label, head2_class);
            } else {
                report.end_to_end.record(label, AamiClass::N);
                if label.is_abnormal() {
                    report.misrouted += 1;
                    *report.misrouted_by_class.entry(label).or_default() += 1;
                } else {
                    report.edge_normal += 1;
                }
            }
        }
    }
    debug_assert!(report.is_conserved());
    Ok(report)
}

fn argmax4(p: &[f64; 4]) -> AamiClass {
    let mut k = 0;
    for i in 1..4 {
        if p[i] > p[k] {
            k = i;
        }
    }
    AamiClass::CLASSIFIED[k]
}
