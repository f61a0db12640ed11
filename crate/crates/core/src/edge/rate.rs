use serde::{Deserialize, Serialize};

use super::decision::EdgeDecision;
use crate::error::{Error, Result};
use crate::sqa::SqaVerdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateReason {
    Startup,
    Noisy,
    AllNormal,
    AbnormalActive,
}

impl RateReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RateReason::Startup => "startup",
            RateReason::Noisy => "noisy",
            RateReason::AllNormal => "all_normal",
            RateReason::AbnormalActive => "abnormal_active",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            RateReason::Startup => 0,
            RateReason::Noisy => 1,
            RateReason::AllNormal => 2,
            RateReason::AbnormalActive => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub low_fs: u16,
    pub full_fs: u16,
    /// Number of most recent decisions the controller looks at.
    pub window: usize,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            low_fs: 100,
            full_fs: 130,
            window: 8,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.low_fs == 0 || self.low_fs >= self.full_fs || self.window == 0 {
            return Err(Error::param(
                "rate config needs 0 < low_fs < full_fs and window >= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateState {
    pub current_fs: u16,
    pub reason: RateReason,
}

impl RateState {
    pub fn startup(cfg: &RateConfig) -> Self {
        Self {
            current_fs: cfg.full_fs,
            reason: RateReason::Startup,
        }
    }
}

/// One controller step. An abnormal beat among the last `window` decisions
/// forces the full rate; otherwise a noisy window or `window` consecutive
/// normal beats drop to the low rate; otherwise the state is kept.
pub fn rate_step(
    state: RateState,
    cfg: &RateConfig,
    last_sqa: &SqaVerdict,
    recent: &[EdgeDecision],
) -> RateState {
    let tail = &recent[recent.len().saturating_sub(cfg.window)..];
    if tail.iter().any(EdgeDecision::is_abnormal) {
        return RateState {
            current_fs: cfg.full_fs,
            reason: RateReason::AbnormalActive,
        };
    }
    if !last_sqa.is_acceptable() {
        return RateState {
            current_fs: cfg.low_fs,
            reason: RateReason::Noisy,
        };
    }
    if tail.len() == cfg.window {
        return RateState {
            current_fs: cfg.low_fs,
            reason: RateReason::AllNormal,
        };
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::{OverrideReason, Verdict};
    use crate::sqa::{Grade, SqaReason};

    fn sqa(ok: bool) -> SqaVerdict {
        SqaVerdict {
            grade: if ok {
                Grade::Acceptable
            } else {
                Grade::Unacceptable
            },
            reason: if ok {
                SqaReason::Clean
            } else {
                SqaReason::AbruptChange
            },
            mean_abs: 0.1,
            mean_sigma: 0.1,
        }
    }

    fn dec(abnormal: bool) -> EdgeDecision {
        EdgeDecision {
            verdict: if abnormal {
                Verdict::Abnormal
            } else {
                Verdict::Normal
            },
            head1_probs: [0.5, 0.5],
            hrv_value: None,
            corr_value: None,
            override_reason: if abnormal {
                OverrideReason::Head1
            } else {
                OverrideReason::None
            },
        }
    }

    #[test]
    fn transitions() {
        let cfg = RateConfig::default();
        let full = RateState::startup(&cfg);
        let s = rate_step(full, &cfg, &sqa(false), &[]);
        assert_eq!((s.current_fs, s.reason), (100, RateReason::Noisy));

        let s = rate_step(s, &cfg, &sqa(true), &[dec(false), dec(true)]);
        assert_eq!((s.current_fs, s.reason), (130, RateReason::AbnormalActive));

        let s = rate_step(full, &cfg, &sqa(true), &vec![dec(false); 8]);
        assert_eq!((s.current_fs, s.reason), (100, RateReason::AllNormal));

        let s = rate_step(full, &cfg, &sqa(true), &vec![dec(false); 5]);
        assert_eq!(s, full);
    }
}
