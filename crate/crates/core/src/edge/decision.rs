use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qrs::{BeatSegment, SEGMENT_FS, SEGMENT_LEN};

/// HRV indicator above this marks a beat abnormal.
pub const HRV_THRESHOLD: f64 = 10.0;
/// Template correlation below this marks a beat abnormal.
pub const CORR_THRESHOLD: f64 = 0.2;

/// `|fs * (1/rr_prev - 1/rr_curr)|` with both intervals in seconds.
pub fn hrv_indicator(rr_prev_s: f64, rr_curr_s: f64, fs: f64) -> Result<f64> {
    if !(rr_prev_s > 0.0 && rr_curr_s > 0.0) {
        return Err(Error::param(format!(
            "RR intervals must be positive (got {rr_prev_s}, {rr_curr_s})"
        )));
    }
    Ok((fs * (1.0 / rr_prev_s - 1.0 / rr_curr_s)).abs())
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Average of R-aligned regular beats with cached mean and sample std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatTemplate {
    pub window: Vec<f64>,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl BeatTemplate {
    pub fn from_windows<'a>(windows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut sum = vec![0.0; SEGMENT_LEN];
        let mut count = 0;
        for w in windows {
            if w.len() != SEGMENT_LEN {
                return Err(Error::param(format!(
                    "template beats need {SEGMENT_LEN} samples, got {}",
                    w.len()
                )));
            }
            sum.iter_mut().zip(w).for_each(|(s, v)| *s += v);
            count += 1;
        }
        if count == 0 {
            return Err(Error::Template("no beats to average".to_string()));
        }
        let window: Vec<f64> = sum.into_iter().map(|s| s / count as f64).collect();
        let (mean, std) = mean_std(&window);
        if !(std > 1e-12) {
            return Err(Error::Template("averaged template is flat".to_string()));
        }
        Ok(Self {
            window,
            count,
            mean,
            std,
        })
    }
}

/// Averages the given beats' windows (each already has R at the same index).
pub fn build_template(beats: &[BeatSegment]) -> Result<BeatTemplate> {
    BeatTemplate::from_windows(beats.iter().map(|b| b.window.as_slice()))
}

/// Pearson correlation with `1/(N-1)` normalisation and sample standard
/// deviations, clamped to [-1, 1].
pub fn template_correlation(template: &BeatTemplate, beat: &[f64]) -> Result<f64> {
    let n = template.window.len();
    if beat.len() != n {
        return Err(Error::param(format!(
            "beat has {} samples, template {n}",
            beat.len()
        )));
    }
    let (mean, std) = mean_std(beat);
    if !(std > 1e-12) {
        return Err(Error::Correlation("beat has zero variance".to_string()));
    }
    let cov: f64 = template
        .window
        .iter()
        .zip(beat)
        .map(|(t, x)| (t - template.mean) * (x - mean))
        .sum::<f64>()
        / (n as f64 - 1.0);
    Ok((cov / (template.std * std)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Normal,
    Abnormal,
}

/// Which gate made a beat abnormal (`None` for normal beats).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideReason {
    None,
    Head1,
    Hrv,
    Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDecision {
    pub verdict: Verdict,
    pub head1_probs: [f64; 2],
    /// `None` until the beat has two preceding RR intervals.
    pub hrv_value: Option<f64>,
    /// `None` while no template exists or when the beat is flat.
    pub corr_value: Option<f64>,
    pub override_reason: OverrideReason,
}

impl EdgeDecision {
    pub fn is_abnormal(&self) -> bool {
        self.verdict == Verdict::Abnormal
    }
}

/// Thresholds of the two indicator gates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub hrv_threshold: f64,
    pub corr_threshold: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            hrv_threshold: HRV_THRESHOLD,
            corr_threshold: CORR_THRESHOLD,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hrv_threshold >= 0.0 && self.hrv_threshold.is_finite()) {
            return Err(Error::param(
                "hrv_threshold must be finite and non-negative",
            ));
        }
        if !(-1.0..=1.0).contains(&self.corr_threshold) {
            return Err(Error::param("corr_threshold must lie in [-1, 1]"));
        }
        Ok(())
    }
}

/// [`decide_with`] at the default thresholds.
pub fn decide(
    beat: &BeatSegment,
    head1_probs: [f64; 2],
    template: Option<&BeatTemplate>,
) -> EdgeDecision {
    decide_with(beat, head1_probs, template, &GateConfig::default())
}

/// Fuses head 1 with the HRV and template gates.
///
/// An abnormal head 1 always wins. Otherwise HRV above the HRV threshold or
/// correlation below the correlation threshold (or an undefined correlation
/// against an existing template) turns the beat abnormal. Gates whose inputs
/// do not exist yet (first beats, template warm-up) are skipped.
pub fn decide_with(
    beat: &BeatSegment,
    head1_probs: [f64; 2],
    template: Option<&BeatTemplate>,
    gates: &GateConfig,
) -> EdgeDecision {
    let hrv_value = match (beat.rr_prev_s, beat.rr_curr_s) {
        (Some(a), Some(b)) => hrv_indicator(a, b, SEGMENT_FS).ok(),
        _ => None,
    };
    let corr = template.map(|t| template_correlation(t, &beat.window));
    let corr_value = corr.as_ref().and_then(|c| c.as_ref().ok().copied());

    let reason = if head1_probs[1] > head1_probs[0] {
        OverrideReason::Head1
    } else if hrv_value.is_some_and(|h| h > gates.hrv_threshold) {
        OverrideReason::Hrv
    } else if matches!(corr, Some(Err(_))) || corr_value.is_some_and(|c| c < gates.corr_threshold) {
        OverrideReason::Correlation
    } else {
        OverrideReason::None
    };
    EdgeDecision {
        verdict: if reason == OverrideReason::None {
            Verdict::Normal
        } else {
            Verdict::Abnormal
        },
        head1_probs,
        hrv_value,
        corr_value,
        override_reason: reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beat(window: Vec<f64>, rr: Option<(f64, f64)>) -> BeatSegment {
        BeatSegment {
            window,
            r_index: 100,
            rr_prev_s: rr.map(|r| r.0),
            rr_curr_s: rr.map(|r| r.1),
            hr_bpm: None,
            label: None,
        }
    }

    fn shape() -> Vec<f64> {
        (0..SEGMENT_LEN)
            .map(|i| (-((i as f64 - 40.0) / 3.0).powi(2)).exp() + 0.1 * (i as f64 * 0.2).sin())
            .collect()
    }

    #[test]
    fn hrv_examples() {
        assert_eq!(hrv_indicator(0.8, 0.8, 130.0).unwrap(), 0.0);
        assert!((hrv_indicator(0.8, 0.5, 130.0).unwrap() - 97.5).abs() < 1e-9);
        assert!(hrv_indicator(0.0, 0.5, 130.0).is_err());
    }

    #[test]
    fn template_of_identical_beats_is_the_beat() {
        let b = beat(shape(), None);
        let t = build_template(&vec![b.clone(); 20]).unwrap();
        assert_eq!(t.count, 20);
        for (a, e) in t.window.iter().zip(&b.window) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn cancelling_beats_make_flat_template() {
        let a = beat(shape(), None);
        let b = beat(shape().iter().map(|v| -v).collect(), None);
        assert!(matches!(build_template(&[a, b]), Err(Error::Template(_))));
    }

    #[test]
    fn decision_rules() {
        let t = build_template(&[beat(shape(), None)]).unwrap();
        let regular = beat(shape(), Some((0.8, 0.8)));
        let d = decide(&regular, [0.2, 0.8], Some(&t));
        assert_eq!(
            (d.verdict, d.override_reason),
            (Verdict::Abnormal, OverrideReason::Head1)
        );
        assert_eq!(d.hrv_value, Some(0.0));

        let early = beat(shape(), Some((0.8, 0.5)));
        let d = decide(&early, [0.9, 0.1], Some(&t));
        assert_eq!(d.override_reason, OverrideReason::Hrv);

        let d = decide(&regular, [0.9, 0.1], Some(&t));
        assert_eq!(d.verdict, Verdict::Normal);
        assert!((d.corr_value.unwrap() - 1.0).abs() < 1e-12);

        let flat = beat(vec![0.3; SEGMENT_LEN], Some((0.8, 0.8)));
        let d = decide(&flat, [0.9, 0.1], Some(&t));
        assert_eq!(d.override_reason, OverrideReason::Correlation);
        assert_eq!(d.corr_value, None);
    }
}
