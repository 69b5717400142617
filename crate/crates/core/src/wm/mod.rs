//! Graph-structured recurrent state-space world model.

mod checkpoint;
pub mod data;
pub mod loss;
pub mod model;
pub mod train;

pub use checkpoint::{WM_KIND, WM_SCHEMA_VERSION};
pub use data::{build_steps, stack_obs, StepBatch};
pub use loss::{categorical_kl, free_bits, wm_loss, LossBreakdown};
pub use model::{sample_onehot, FreeBits, ObsBatch, Observed, WmConfig, WorldModel};
pub use train::{init_model, train_wm, EpochLog, TrainOptions, WmTrainConfig};
