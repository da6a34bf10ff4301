//! Training schedule, checkpoints, Monte-Carlo evaluation and plots.

pub mod checkpoint;
pub mod eval;
pub mod float_serde;
pub mod optim;
pub mod plot;
pub mod seeds;
pub mod train;

pub use checkpoint::Checkpoint;
pub use eval::{
    baseline_uncoded, evaluate, evaluate_codec, EvalConfig, EvalMode, EvalReport, EvalTiming,
    LinkSimulator,
};
pub use optim::Adam;
pub use train::{run_schedule, train_epoch, EpochRecord, ScheduleStage, TrainConfig, TrainState};
