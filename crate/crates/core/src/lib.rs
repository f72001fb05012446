//! HOI-TG network: init head, graph-augmented transformer encoder, training
//! objective and evaluation metrics.

pub mod config;
pub mod custom;
mod error;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod params;

pub use config::{EncoderConfig, ModelConfig, PlainPath, Placement, Variant};
pub use custom::{axis_angle_matrix, grid_sample, rodrigues};
pub use error::{ModelError, Result};
pub use layers::{encoder_block, graph_residual_block, self_attention, Adjacencies, BlockOutput, Partition};
pub use losses::{total_loss, LossReport, LossVars, LossWeights, PredictionVars, TargetVars, TERM_NAMES};
pub use metrics::{chamfer, contact_pr, contact_scores, ContactScore, MetricsReport, SampleMetrics};
pub use model::{AttentionMap, ForwardVars, HoiModel, InitEstimates, ModelAssets, Reconstruction};
pub use params::{Bound, ParamStore};
