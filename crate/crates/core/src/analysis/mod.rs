//! Bound evaluators, curve fits and the verification suite.

pub mod bounds;
pub mod fit;
pub mod verify;

pub use bounds::{
    best_oracle_margin, egreedy_cost_bound, egreedy_precondition_threshold, egreedy_pull_bounds,
    egreedy_pull_bounds_curve, ucb_bounds, EgreedyPullBounds, UcbBounds,
};
pub use fit::{linear_fit, slope_fit, LineFit, SlopeFit};
pub use verify::{verify_suite, CheckReport, CheckpointView, TrialView, Verdict, VerifyReport};
