//! Bayesian optimization of sampling parameters under a successive-halving
//! budget.

mod asha;
mod gp;
mod scheduler;
mod space;

pub use asha::{promote_or_stop, Decision, RungBook, RungReport};
pub use gp::{expected_improvement, matern52, NoiseModel, Surrogate, JITTER, LENGTH_SCALE_BOUNDS};
pub use scheduler::{
    incumbent, optimize, optimize_resume, read_history, reports_in_order, suggest, write_history, FnObjective,
    Objective, OptimizeOutcome, RungResult, SchedulerConfig, TrialRecord, TrialStatus,
};
pub use space::{Dimension, SearchSpace, Transform};
