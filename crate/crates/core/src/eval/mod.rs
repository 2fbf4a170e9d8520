pub mod config;
pub mod experiment;
pub mod metrics;
pub mod plot;

pub use config::{ExperimentConfig, Variant};
pub use experiment::{run_experiment, ExperimentReport, MetricsReport};
pub use metrics::{accuracy, weighted_f1, ConfusionMatrix};
pub use plot::{emit_weight_plot_data, WeightSummary};
