use std::collections::VecDeque;
use std::io::Write;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::decision::{decide_with, BeatTemplate, EdgeDecision, GateConfig};
use super::rate::{rate_step, RateConfig, RateState};
use crate::aami::AamiClass;
use crate::error::{Error, Result};
use crate::link::{Link, LinkStats, MsgType, Payload, WireMessage};
use crate::nn::{weights_hash, ModelGraph, Tensor, INPUT_SHAPE};
use crate::qrs::{detect_rpeaks, segment_beats, SEGMENT_FS};
use crate::signal::{design_bandpass, filter_signal, resample, EcgSignal, FirFilter};
use crate::sqa::{grade_window, SqaConfig, SqaVerdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeConfig {
    pub session_id: u32,
    pub sqa: SqaConfig,
    pub rate: RateConfig,
    pub gates: GateConfig,
    /// When false the edge always acquires at `rate.full_fs`.
    pub adaptive_rate: bool,
    /// Head-1-normal beats averaged into the session template.
    pub template_beats: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub filter_order: Option<usize>,
    /// Signal kept on each side of a window for filtering and detection.
    pub context_s: f64,
    pub outbox_capacity: usize,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            session_id: 1,
            sqa: SqaConfig::default(),
            rate: RateConfig::default(),
            gates: GateConfig::default(),
            adaptive_rate: true,
            template_beats: 20,
            band_low_hz: 1.0,
            band_high_hz: 50.0,
            filter_order: None,
            context_s: 2.0,
            outbox_capacity: 256,
        }
    }
}

impl EdgeConfig {
    pub fn validate(&self) -> Result<()> {
        self.sqa.validate()?;
        self.rate.validate()?;
        self.gates.validate()?;
        if self.template_beats == 0 || self.outbox_capacity == 0 {
            return Err(Error::param(
                "template_beats and outbox_capacity must be positive",
            ));
        }
        if !(self.context_s >= 0.0) {
            return Err(Error::param("context_s must be non-negative"));
        }
        Ok(())
    }
}

/// Bounded send queue. On overflow the oldest message that is not a feature
/// map is dropped; feature maps are never dropped, so the queue may exceed
/// its capacity when it holds only feature maps.
#[derive(Debug, Clone)]
pub struct Outbox {
    queue: VecDeque<WireMessage>,
    capacity: usize,
    dropped: usize,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Self {
            queue: VecDeque::new(),
            capacity,
            dropped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn push(&mut self, msg: WireMessage) {
        self.queue.push_back(msg);
        while self.queue.len() > self.capacity {
            let Some(i) = self
                .queue
                .iter()
                .position(|m| m.msg_type() != MsgType::FeatureMap)
            else {
                break;
            };
            self.queue.remove(i);
            self.dropped += 1;
        }
    }

    /// Sends queued messages in order until the queue empties or the link
    /// fails. Transport failures leave the message queued for a later
    /// attempt; protocol violations are returned.
    pub fn flush(&mut self, link: &mut dyn Link) -> Result<Vec<WireMessage>> {
        let mut replies = Vec::new();
        while let Some(msg) = self.queue.front() {
            match link.send(msg) {
                Ok(r) => {
                    replies.extend(r);
                    self.queue.pop_front();
                }
                Err(e @ (Error::Io(_) | Error::Link(_))) => {
                    warn!(
                        "link unavailable, {} message(s) held: {e}",
                        self.queue.len()
                    );
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(replies)
    }
}

/// A 4-class verdict returned by the fog node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FogReply {
    pub beat_id: u32,
    pub class: AamiClass,
    pub probs: [f32; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    /// First sample of the window in the source record.
    pub start_index: usize,
    pub acquired_fs: u16,
    pub sqa: SqaVerdict,
    pub beats: usize,
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatRecord {
    pub session: u32,
    pub beat_id: u32,
    pub t_s: f64,
    /// R position in the source record.
    pub r_index: usize,
    pub hr_bpm: Option<f64>,
    pub decision: EdgeDecision,
    pub heart_rate_sent: bool,
    pub feature_map_sent: bool,
    /// Encoded size of the frame queued for this beat.
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeReport {
    pub session_id: u32,
    pub windows: Vec<WindowRecord>,
    pub beats: Vec<BeatRecord>,
    pub replies: Vec<FogReply>,
    pub rate_changes: Vec<(usize, RateState)>,
    pub link: LinkStats,
    /// Multiply-accumulates spent on the edge network.
    pub edge_macs: u64,
    pub dropped: usize,
    pub undelivered: usize,
}

impl EdgeReport {
    pub fn feature_maps(&self) -> usize {
        self.beats.iter().filter(|b| b.feature_map_sent).count()
    }

    pub fn noise_reports(&self) -> usize {
        self.windows
            .iter()
            .filter(|w| !w.sqa.is_acceptable())
            .count()
    }
}

struct Acquired {
    /// Filtered context at the segmentation rate.
    filtered: EcgSignal,
    /// Offset of the window inside `filtered`.
    offset: usize,
    len: usize,
    ctx_start: usize,
}

fn acquire(
    sig: &EcgSignal,
    start: usize,
    end: usize,
    fs: u16,
    cfg: &EdgeConfig,
    filter: &FirFilter,
) -> Result<Acquired> {
    let ctx = (cfg.context_s * sig.fs).round() as usize;
    let ctx_start = start.saturating_sub(ctx);
    let ctx_end = (end + ctx).min(sig.len());
    let mut chunk = sig.slice(ctx_start, ctx_end);
    if (chunk.fs - f64::from(fs)).abs() > 1e-9 {
        chunk = resample(&chunk, f64::from(fs))?;
    }
    if (chunk.fs - SEGMENT_FS).abs() > 1e-9 {
        chunk = resample(&chunk, SEGMENT_FS)?;
    }
    let scale = SEGMENT_FS / sig.fs;
    let offset = ((start - ctx_start) as f64 * scale).round() as usize;
    let len = (((end - start) as f64) * scale).round() as usize;
    Ok(Acquired {
        filtered: filter_signal(&chunk, filter)?,
        offset,
        len: len.min(chunk.len().saturating_sub(offset)),
        ctx_start,
    })
}

/// Runs the edge pipeline over a recorded signal, sending through `link`.
///
/// The record is cut into SQA windows. Each window is acquired at the
/// current controller rate, brought to the segmentation rate and bandpassed
/// with context on both sides. Unacceptable windows yield a noise report.
/// Acceptable windows are segmented; every beat runs through the edge half of
/// the network and the decision gates: normal beats send their heart rate,
/// abnormal beats send the cut activation. The controller runs after each
/// window and announces rate changes.
pub fn run_edge_session(
    sig: &EcgSignal,
    model: &ModelGraph<f32>,
    cfg: &EdgeConfig,
    link: &mut dyn Link,
    mut log: Option<&mut dyn Write>,
) -> Result<EdgeReport> {
    cfg.validate()?;
    let filter = design_bandpass(
        SEGMENT_FS,
        cfg.band_low_hz,
        cfg.band_high_hz,
        cfg.filter_order,
    )?;
    let sid = cfg.session_id;
    let mut outbox = Outbox::new(cfg.outbox_capacity);
    let mut state = RateState::startup(&cfg.rate);
    let mut report = EdgeReport {
        session_id: sid,
        windows: Vec::new(),
        beats: Vec::new(),
        replies: Vec::new(),
        rate_changes: Vec::new(),
        link: LinkStats::default(),
        edge_macs: 0,
        dropped: 0,
        undelivered: 0,
    };

    let mut replies = link.send(&WireMessage::new(
        sid,
        0,
        Payload::Hello {
            weights_hash: weights_hash(model),
            fs: state.current_fs,
        },
    ))?;

    let win = (cfg.sqa.window_s * sig.fs).round() as usize;
    let mut template: Option<BeatTemplate> = None;
    let mut warmup: Vec<Vec<f64>> = Vec::new();
    let mut recent: VecDeque<EdgeDecision> = VecDeque::new();
    let mut next_beat_id = 1u32;

    for k in 0..sig.len() / win.max(1) {
        let start = k * win;
        let acq = acquire(sig, start, start + win, state.current_fs, cfg, &filter)?;
        let window = acq.filtered.slice(acq.offset, acq.offset + acq.len);
        let verdict = grade_window(&window, &cfg.sqa)?;
        let mut n_beats = 0;
        if !verdict.is_acceptable() {
            outbox.push(WireMessage::new(
                sid,
                0,
                Payload::NoiseReport {
                    window_start: start as u32,
                    reason: verdict.reason.code(),
                },
            ));
        } else {
            let peaks = detect_rpeaks(&acq.filtered)?;
            let beats = segment_beats(&acq.filtered, &peaks)?;
            for beat in beats
                .iter()
                .filter(|b| b.r_index >= acq.offset && b.r_index < acq.offset + acq.len)
            {
                let beat_id = next_beat_id;
                next_beat_id += 1;
                n_beats += 1;
                let x = Tensor::from_f64(vec![INPUT_SHAPE.0, INPUT_SHAPE.1], &beat.window)?;
                let (head1, cut) = model.forward_edge(&x)?;
                report.edge_macs += model.edge_macs();
                let head1 = [head1[0], head1[1]];
                let decision = decide_with(beat, head1, template.as_ref(), &cfg.gates);

                if template.is_none() && head1[0] >= head1[1] {
                    warmup.push(beat.window.clone());
                    if warmup.len() == cfg.template_beats {
                        match BeatTemplate::from_windows(warmup.iter().map(Vec::as_slice)) {
                            Ok(t) => template = Some(t),
                            Err(e) => warn!("template rejected, collecting again: {e}"),
                        }
                        warmup.clear();
                    }
                }

                let r_index =
                    acq.ctx_start + (beat.r_index as f64 * sig.fs / SEGMENT_FS).round() as usize;
                let msg = if decision.is_abnormal() {
                    Some(Payload::FeatureMap {
                        values: cut.data().to_vec(),
                    })
                } else {
                    beat.hr_bpm.map(|hr| Payload::HeartRate { bpm: hr as f32 })
                };
                let record = BeatRecord {
                    session: sid,
                    beat_id,
                    t_s: r_index as f64 / sig.fs,
                    r_index,
                    hr_bpm: beat.hr_bpm,
                    heart_rate_sent: matches!(msg, Some(Payload::HeartRate { .. })),
                    feature_map_sent: matches!(msg, Some(Payload::FeatureMap { .. })),
                    bytes: msg.as_ref().map_or(0, |p| p.msg_type().frame_len()),
                    decision: decision.clone(),
                };
                if let Some(p) = msg {
                    outbox.push(WireMessage::new(sid, beat_id, p));
                }
                if let Some(w) = log.as_deref_mut() {
                    writeln!(
                        w,
                        "{}",
                        serde_json::to_string(&record).map_err(|e| Error::format(e.to_string()))?
                    )?;
                }
                report.beats.push(record);
                recent.push_back(decision);
                if recent.len() > cfg.rate.window {
                    recent.pop_front();
                }
            }
        }
        report.windows.push(WindowRecord {
            start_index: start,
            acquired_fs: state.current_fs,
            sqa: verdict,
            beats: n_beats,
        });

        if cfg.adaptive_rate {
            let next = rate_step(state, &cfg.rate, &verdict, recent.make_contiguous());
            if next.current_fs != state.current_fs {
                debug!(
                    "window {k}: rate {} -> {} ({:?})",
                    state.current_fs, next.current_fs, next.reason
                );
                outbox.push(WireMessage::new(
                    sid,
                    0,
                    Payload::RateChange {
                        fs: next.current_fs,
                        reason: next.reason.code(),
                    },
                ));
                report.rate_changes.push((start + win, next));
            }
            state = next;
        }
        replies.extend(outbox.flush(link)?);
    }
    replies.extend(outbox.flush(link)?);

    for r in replies {
        if let Payload::Classification { class, probs } = r.payload {
            report.replies.push(FogReply {
                beat_id: r.beat_id,
                class,
                probs,
            });
        }
    }
    report.link = link.stats().clone();
    report.dropped = outbox.dropped();
    report.undelivered = outbox.len();
    Ok(report)
}
