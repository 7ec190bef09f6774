//! Orchestration: configuration, training, evaluation, rendering and the
//! command-line stages.

pub mod config;
pub mod eval;
pub mod objective;
pub mod pipeline;
pub mod render;
pub mod train;

pub use config::{RunConfig, TopologyPoses, TrainConfig};
pub use eval::{align_trajectories, ate, AteReport};
pub use pipeline::{run_command, Args, Command, Variant};
pub use train::{run_training, train_epoch, TrainOutcome, TrainProblem, TrainState};
