//! Plug-in estimation of the noise scale, calibration parameters and GP
//! hyperparameters.

mod fit;
mod loss;
pub mod optim;
mod sigma;

pub use fit::{fit, fit_with_loss, FitOptions, FitResult, OptimizerTrace};
pub use loss::{cv_folds, loss_cv, loss_cv_folds, loss_mle, CalibrationLoss, Loss, LossKind, LossValue};
pub use sigma::{ordering, sigma_hat, OrderingPolicy};
