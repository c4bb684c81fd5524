//! Optimisation, metrics, the synthetic benchmark and the experiment
//! protocols.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod optim;
pub mod synth;
pub mod trainer;

pub use config::{ExperimentConfig, TrainConfig};
pub use experiment::{model_spec, prepare_fold, run_experiment, split_windows, ExperimentReport, PreparedFold, Protocol, RunRecord};
pub use metrics::{aggregate, compute_metrics, Aggregate, Metrics};
pub use optim::{adam_step, clip_gradients, lr_schedule, AdamConfig, AdamState};
pub use synth::{synth_generate, SynthSpec};
pub use trainer::{batch_gradient, dataset_mse, evaluate, train, Evaluation, History};
