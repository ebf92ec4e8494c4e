//! Episodic environment, agent variants, training and evaluation runs,
//! episode logs and metric reports.

mod agent;
mod commands;
mod config;
mod env;
mod episode_log;
mod metrics;
mod train;

pub use agent::{compose_target, AgentVariant, Driver, StepPlan};
pub use commands::{
    cmd_collect_demos, cmd_eval, cmd_replay, cmd_train_bc, cmd_train_rl, jsonl_files, label_variance, report_from_logs,
    BcReport, CollectSummary, DemoFileStats,
};
pub use config::RunConfig;
pub use env::{DrivingEnv, StepOutcome};
pub use episode_log::{
    episode_header, read_episode_log, ActorSnapshot, EpisodeHeader, EpisodeLog, EpisodeLogWriter, LogFrame, LOG_FORMAT,
};
pub use metrics::{format_table, EpisodeSummary, MetricsReport};
pub use train::{evaluate, make_driver, train_rl, EvalPoint, MetricsRecord, TrainReport};
