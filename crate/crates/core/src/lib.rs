//! Reward-poisoning attacks on stochastic multi-armed bandits.
//!
//! A [`BanditInstance`] draws Gaussian rewards, a [`Learner`] (ε-greedy or
//! UCB) picks arms, and an [`Attacker`] perturbs each reward before the
//! learner sees it, trying to make a chosen target arm look best at small
//! cumulative cost. [`run_experiment`] runs independent trials in parallel and
//! [`analysis`] holds the closed-form bounds, curve fits and the
//! verification suite.
//!
//! Arms are 0-based everywhere in this API. Files, reports and docs written
//! for people number them from 1, so arm `i` here is arm `i + 1` there.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! and `*F32` aliases below fix the type.

// `!(x > 0)` is how NaN gets rejected alongside non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod attackers;
pub mod env;
pub mod error;
pub mod learners;
pub mod protocol;
pub mod scalar;
pub mod stats;

pub use attackers::{beta, AttackStrategy, Attacker, AttackerState, ConstantMode};
pub use env::{BanditInstance, GapTable, RngStream};
pub use error::{Error, Result};
pub use learners::{ExplorationSchedule, Learner, LearnerSpec, LearnerState};
pub use protocol::{
    run_experiment, run_trial, Aggregate, AggregatePoint, AttackSnapshot, Checkpoint,
    CheckpointGrid, ExperimentConfig, ExperimentResult, RoundRecord, Summary, TrialResult,
};
pub use scalar::Scalar;
pub use stats::CompensatedSum;

pub type BanditInstanceF64 = BanditInstance<f64>;
pub type BanditInstanceF32 = BanditInstance<f32>;
pub type LearnerF64 = Learner<f64>;
pub type LearnerF32 = Learner<f32>;
pub type AttackerF64 = Attacker<f64>;
pub type AttackerF32 = Attacker<f32>;
pub type ExperimentConfigF64 = ExperimentConfig<f64>;
pub type ExperimentConfigF32 = ExperimentConfig<f32>;
pub type TrialResultF64 = TrialResult<f64>;
pub type TrialResultF32 = TrialResult<f32>;
pub type ExperimentResultF64 = ExperimentResult<f64>;
pub type ExperimentResultF32 = ExperimentResult<f32>;
