//! Optimization: Adam, gradient checks, ALM pretraining and multi-task
//! fine-tuning, checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod fold;
pub mod gradcheck;
pub mod losses;
pub mod multitask;
pub mod pretrain;

pub use adam::adam_step;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::TrainConfig;
pub use fold::{build_model, train_fold, FoldReport};
pub use gradcheck::{grad_check, toy_grad_check, GradCheckReport, LossEval, LossPath};
pub use losses::{multitask_loss, LossParts, LossWeights};
pub use multitask::{fit_names, name_counts, similarity_gap, train_multitask, Ablation, FoldData, MultitaskReport};
pub use pretrain::{pretrain_alm, PretrainReport};

#[cfg(test)]
mod tests;
