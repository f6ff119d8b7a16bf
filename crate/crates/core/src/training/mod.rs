//! Losses, curriculum schedules, the training loop and validation.

pub mod loss;
pub mod schedule;
pub mod trainer;
pub mod validate;

pub use loss::{cross_entropy, l1_term, loss_cls, loss_rec, loss_total, magnitude, ssim_mean, LossParts, LossWeights};
pub use schedule::{
    schedule_by_name, schedule_flat, schedule_strategy1, schedule_strategy2, CurriculumSchedule, LrSchedule,
    OptimizerSpec, Phase, Stage,
};
pub use trainer::{
    checkpoint_dir, classifier_accuracy, clip_grad_norm, make_optimizer, nominal_epoch, planned_epochs,
    read_metric_log, train, train_step, EpochRecord, TrainConfig, TrainOutcome, METRICS_LOG,
};
pub use validate::{
    prepare_sample, reconstruct, validate, validate_with, validation_mask_seed, CellReport, CsmSource, MeanStd,
    MetricStats, Sample, ValidateOptions, ValidationTable,
};
