//! Loss, L2 penalty, Adam, dropout and the training loop.

mod adam;
mod dropout;
mod fit;
mod loss;

pub use adam::{adam_step, AdamState};
pub use dropout::apply_dropout;
pub use fit::{evaluate_split, fit, fit_seed, train_epoch, EpochLog, SeedRun, TrainConfig};
pub use loss::{bce_logit_grad, bce_loss, l2_gradient_into, l2_penalty, prob_clamp};
