//! Objectives, gradient verification and the two training stages.

mod config;
mod gradcheck;
mod losses;
mod stages;

pub use config::{LrSchedule, Stage1Config, Stage2Config, Task};
pub use gradcheck::{
    grad_check, miniature_bundle, miniature_config, rel_error, GradCheckReport, LossName, WorstEntry, FD_STEP,
    MINI_SIZE, REL_FLOOR,
};
pub use losses::{
    align_objective, dfr_objective, dir_objective, latent_shape, loss_align, loss_dfr, loss_dir, AlignBindings,
    AlignVariant, DirWeights, GraphLoss, LossNoise, LossPart, LossReport, PartValue,
};
pub use stages::{
    train_stage1, train_stage2, MetricsLog, StageOutput, FROZEN_IN_STAGE2, STAGE1_CKPT, STAGE1_METRICS, STAGE2_CKPT,
    STAGE2_METRICS,
};
