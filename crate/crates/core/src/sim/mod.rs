//! The slotted closed loop (source, link, engine, ideal actuator), its
//! metrics and the Monte Carlo experiment harness.

mod config;
mod data;
mod episode;
mod experiment;
mod pretrain;
mod report;

pub use config::{DataConfig, ExperimentConfig, ScenarioConfig, TraceSource, TrainingConfig};
pub use data::{derive_seed, PreparedData};
pub use episode::{
    average_ae, evaluate_success, simulate, success_probability, DeliveryRecord, EpisodeInputs, EpisodeTrace, SlotRecord,
    TrainerSummary,
};
pub use experiment::{EpisodeResult, ExperimentReport, Simulation, SlotStat, StrategyReport};
pub use pretrain::{pretrain, PretrainSummary};
pub use report::{
    episode_csv, export_report, read_report, read_slot_csv, report_csv, report_json, source_from_tag, CsvRow, REPORT_CSV,
    REPORT_JSON,
};
