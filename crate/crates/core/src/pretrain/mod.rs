//! Self-supervised pretraining: masking, reconstruction and cross-scale
//! alignment losses, the optimizer and loop, and gradient verification.

mod config;
mod gradcheck;
mod loss;
mod mask;
mod optim;
mod schedule;
mod trainer;

pub use config::TrainConfig;
pub use gradcheck::{
    finite_difference_check, grad_check, grad_check_config, rel_error, GradCheckEntry, GradCheckReport,
};
pub use loss::{align_loss, align_loss_with, recon_loss, total_loss, LossWeights};
pub use mask::{
    mask_strategies, masked_channel_count, sample_mask, visible_count, ChannelMasking, MaskPlan, MaskStrategy,
    ScaleMask, TokenMasking,
};
pub use optim::{AdamW, CosineSchedule};
pub use schedule::{scale_schedules, AllScales, CycleScales, ScaleSchedule, StepScales};
pub use trainer::{batch_loss, LossBreakdown, StepMetrics, Trainer};
