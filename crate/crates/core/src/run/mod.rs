//! Configuration, the training loop and the command drivers.

pub mod commands;
pub mod config;
pub mod fit;

pub use commands::{
    load_checked, run_eval, run_gen_synthetic, run_kb_filter, run_report, run_train, run_transfer, transfer_params,
    TrainSummary,
};
pub use config::{parse_overrides, RunConfig, DATA_ROOT_ENV};
pub use fit::{accuracy, fit, predict, EpochLog, FitResult, FitSettings};
