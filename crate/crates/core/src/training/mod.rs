//! Reweighted training objective, hard-negative mining, the joint
//! two-network training loop and checkpoints.

mod checkpoint;
mod config;
mod loss;
mod run;
mod step;

pub use checkpoint::{Checkpoint, OptimGroup, RngState, MAGIC, VERSION};
pub use config::{HnmSchedule, Objective, TrainMode, TrainRun};
pub use loss::{
    batch_segments, bce_with_logits, hnm_threshold, hnm_weights, per_patch_loss, per_patch_psnr, reweighted_loss,
    reweighted_loss_var, LossRecord, PatchLosses, WEIGHT_EPS,
};
pub use run::{
    epoch_checkpoint_name, epoch_items, train_loop, validate, EpochMetrics, TrainData, ABORT_CHECKPOINT,
    LAST_CHECKPOINT, METRICS_FILE, METRICS_HEADER,
};
pub use step::{StepGrads, TrainItem, Trainer};
