//! Metrics and experiments.

mod benchmark;
mod experiments;
mod metrics;

pub use benchmark::{
    build_method, common_sim_config, evaluate_method, evaluate_with, run_benchmark, EvalReport, MethodKind,
    MethodReport, SequenceResult,
};
pub use experiments::{
    heading_swap_test, heading_swap_trial, shuffle_control_test, ShuffleResult, SwapConfig, SwapReport, SwapTrial,
};
pub use metrics::{avg_localization_error, success_counts, success_rate, LocalizationError, SuccessCounts};
