//! Loss gradients, Adam and direct per-target fitting.

mod adam;
mod fit;
mod grad;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use fit::{fit, fit_mel, write_history_csv, FitBudget, FitFailure, FitOutcome, HistoryEntry};
pub use grad::{bank_mel, finite_difference_grad, loss_and_grad, loss_only, mel_loss_grad, GRAD_CHUNK};
