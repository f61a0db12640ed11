//! Evaluation: labeled records, metrics, pipeline scoring, the energy model,
//! the MAC/memory report, synthetic corpora and the settings file.

pub mod config;
pub mod corpus;
mod energy;
mod macs;
mod metrics;
mod pipeline;
mod records;

pub use config::Settings;
pub use energy::{
    case_signal, energy_report, simulate_case, CaseSpec, EnergyModel, EnergyReport, EnergyRow,
    PayloadMode, SimulationConfig, TrafficSummary,
};
pub use macs::{mac_memory_report, Baseline, BaselineRow, LayerRow, MacReport};
pub use metrics::{metrics, ConfusionCounts, ConfusionMatrix, Metrics, Rate};
pub use pipeline::{
    evaluate_pipeline, front_end, BeatSource, EvalConfig, EvalReport, GroundTruthClassifier,
    SplitClassifier,
};
pub use records::{
    load_annotations, load_record, parse_annotations, record_id, write_annotations, LabeledRecord,
    SplitManifest, ANNOTATION_HEADER, DEFAULT_SPLIT,
};
