//! Teacher training and sharp-to-blur student distillation.

mod augment;
mod optim;
mod phase;

pub use augment::{augment, color_jitter, rotate, AugmentPolicy, AugmentedView, ColorJitter, JpegAugment};
pub use optim::{adamw_step, clip_global_norm, cosine_lr, AdamState, ADAM_EPS, BETA1, BETA2};
pub use phase::{
    clean_accuracy, distill_student, encode_pooled, identity_blur_policy, phase_fingerprint, student_views,
    train_teacher, trailing_mean, PhaseConfig, Schedule, StepRecord, StudentView, TrainOptions, TrainOutcome,
};
