//! Loss, gradients, optimizers, metrics, cross-validation and checkpoints.

mod checkpoint;
mod eval;
mod grad;
mod optim;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use eval::{
    argmax, cross_validate, evaluate, evaluate_subset, kfold_split, predict, run_fold, CrossValidation, FoldResult,
    MeanStd, Metrics,
};
pub use grad::{
    batch_loss, cross_entropy, finite_diff_flat, finite_diff_grad, grad, loss_and_grad, sample_grad, PROB_FLOOR,
};
pub use optim::{adam_step, sgd_step, train, AdamState, OptimizerKind, TrainConfig, TrainHistory};
