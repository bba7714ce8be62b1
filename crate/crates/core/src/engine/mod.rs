//! Training and evaluation: optimizers, losses, metrics and the loop that
//! ties them to a [`crate::graph::ModelGraph`].

mod loss;
mod metrics;
mod optim;
mod train;

pub use loss::{dice_loss, loss_from_logits, LossKind, DICE_EPS};
pub use metrics::{
    auc_from_ranks, dice_global, dice_per_case, feature_mauc, feature_mauc_with, midranks, miou,
    roc_auc, FeatureMauc, Negatives,
};
pub use optim::{adam_step, sgd_step, AdamConfig, OptimState, Optimizer, SgdConfig};
pub use train::{
    crop_window, one_hot, predict, recalibrate_norm, stack, train_loop, EpochRecord, History,
    Sample, StepDecay, TrainConfig,
};
