pub mod experiment;
pub mod metrics;

pub use experiment::{
    run_experiment, train_relay_models, Experiment, ExperimentConfig, Method, RunArtifacts,
};
pub use metrics::{emit_plotdata, emit_report, Counts, DelayHistogram, MethodMetrics, MetricsReport};
