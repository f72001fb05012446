//! Training loop, checkpoints, evaluation, ablations and attention export for
//! the HOI-TG toy system.

pub mod ablation;
pub mod attention;
pub mod checkpoint;
pub mod config;
mod error;
pub mod eval;
pub mod train;

pub use ablation::{run_ablation, AblationKind, AblationRow, AblationTable, KNN_SWEEP};
pub use attention::{export_attention, human_object_attention, HumanObjectAttention};
pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT};
pub use config::TrainConfig;
pub use error::{HarnessError, Result};
pub use eval::{evaluate, evaluate_sample, score, EvalReport, SampleEval, PUBLISHED_REFERENCE};
pub use train::{batch_gradients, log_header, prepare, sample_gradients, train, train_on_dataset, StepLog, TrainOutcome, TrainOutput};
