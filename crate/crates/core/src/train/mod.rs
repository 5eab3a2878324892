//! Optimization, the curriculum training loop, evaluation and timing.

mod bench;
mod metrics;
mod optimizer;
mod trainer;

pub use bench::{
    available_memory, bench_forward, estimate_forward_bytes, fit_points, loglog_fit, BenchOptions, BenchPoint,
    SlopeFit,
};
pub use metrics::{write_csv, TrainMetrics, CSV_HEADER};
pub use optimizer::{radam_rectifier, radam_rho, OptimizerConfig, OptimizerKind, OptimizerState, StepInfo};
pub use trainer::{
    eval_examples, evaluate, evaluate_examples, score, train_loop, train_step, EvalResult, TrainConfig, TrainOutcome,
    TrainSink,
};

#[cfg(test)]
mod tests;
