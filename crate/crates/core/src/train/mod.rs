//! Optimization: loss, RMSprop, the learning-rate schedule, the training
//! loop, and gradient checking.

mod gradcheck;
mod loss;
mod rmsprop;
mod schedule;
mod trainer;

pub use gradcheck::{
    analytic_gradient, compare_gradients, grad_check, relative_error, tiny_problem, GradCheckReport,
};
pub use loss::mse_loss;
pub use rmsprop::{rmsprop_step, OptimizerState};
pub use schedule::{Decision, Schedule};
pub use trainer::{
    build_pairs, evaluate_loss, fit, fit_with, prepare, retrieval_metrics, run_epoch, EpochLog,
    EpochObserver, FitInputs, FitOutcome, Prepared, TrainingPair, Validator,
};
