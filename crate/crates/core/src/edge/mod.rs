//! Edge runtime: normal/abnormal decision fusion, sampling-rate control and
//! the per-window acquisition loop that decides what crosses the link.

mod decision;
mod rate;
mod session;

pub use decision::{
    build_template, decide, decide_with, hrv_indicator, template_correlation, BeatTemplate,
    EdgeDecision, GateConfig, OverrideReason, Verdict, CORR_THRESHOLD, HRV_THRESHOLD,
};
pub use rate::{rate_step, RateConfig, RateReason, RateState};
pub use session::{
    run_edge_session, BeatRecord, EdgeConfig, EdgeReport, FogReply, Outbox, WindowRecord,
};
