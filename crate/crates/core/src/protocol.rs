//! The attack protocol: one trial is the loop
//!
//! 1. the learner picks `I_t`,
//! 2. the world draws `r⁰_t`,
//! 3. the attacker sees `(I_t, r⁰_t)` and picks `α_t`,
//! 4. the learner receives `r_t = r⁰_t − α_t`.
//!
//! Each trial owns one [`RngStream`] `(base_seed, trial_index)`. Within a
//! round, draws are taken in a fixed order: the ε-greedy exploration coin,
//! then the uniform arm (only when exploring), then the reward noise. UCB and
//! the initialization rounds draw only reward noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attackers::{AttackStrategy, Attacker};
use crate::env::{BanditInstance, RngStream};
use crate::error::{Error, Result};
use crate::learners::{default_init_order, Learner, LearnerSpec};
use crate::stats::{self, CompensatedSum};
use crate::Scalar;

/// One round of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord<S> {
    pub t: u64,
    pub arm: usize,
    pub pre_reward: S,
    pub alpha: S,
    pub post_reward: S,
    pub explored: bool,
}

/// Snapshot of a trial after round `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<S> {
    pub t: u64,
    /// `Σ_{s≤t} |α_s|`.
    pub cost: S,
    pub target_pulls: u64,
    pub pulls: Vec<u64>,
    /// Signed `Σ_{s∈τ_i(t)} α_s` per arm.
    pub attack: Vec<S>,
    /// Per arm, the pull counts at the most recent round that attacked it
    /// with `α > 0`; `None` if never attacked.
    pub last_attack: Vec<Option<AttackSnapshot>>,
}

/// `(N_i, N_K)` right after a positive attack on arm `i` at `round`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSnapshot {
    pub round: u64,
    pub arm_pulls: u64,
    pub target_pulls: u64,
}

/// First round at which event E failed, and the arm that broke it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventViolation {
    pub t: u64,
    pub arm: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult<S> {
    pub trial: u64,
    pub seed: u64,
    pub stream_id: u64,
    pub checkpoints: Vec<Checkpoint<S>>,
    /// Whether `|μ̂⁰_i(t) − μ_i| < β(N_i(t))` held for every arm and every
    /// round `t > K`.
    pub event_e_holds: bool,
    pub event_e_violation: Option<EventViolation>,
    /// Exploitation rounds after initialization that did not pull the target.
    pub exploitation_violations: u64,
    pub log: Option<Vec<RoundRecord<S>>>,
}

impl<S: Scalar> TrialResult<S> {
    pub fn last(&self) -> &Checkpoint<S> {
        self.checkpoints
            .last()
            .expect("grid always contains the horizon")
    }
}

/// Rounds at which a trial is snapshotted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointGrid {
    /// `round(10^(j/per_decade))` for `j = 0, 1, …`, deduplicated, plus the
    /// horizon.
    Geometric {
        per_decade: u32,
    },
    Explicit {
        points: Vec<u64>,
    },
}

impl Default for CheckpointGrid {
    fn default() -> Self {
        Self::Geometric { per_decade: 50 }
    }
}

impl CheckpointGrid {
    pub fn points(&self, horizon: u64) -> Result<Vec<u64>> {
        match self {
            Self::Geometric { per_decade } => {
                if *per_decade == 0 {
                    return Err(Error::Config(
                        "checkpoint grid needs at least one point per decade".into(),
                    ));
                }
                let mut pts: Vec<u64> = Vec::new();
                for j in 0.. {
                    let t = 10f64.powf(j as f64 / *per_decade as f64).round() as u64;
                    if t > horizon {
                        break;
                    }
                    if pts.last() != Some(&t) {
                        pts.push(t);
                    }
                }
                if pts.last() != Some(&horizon) {
                    pts.push(horizon);
                }
                Ok(pts)
            }
            Self::Explicit { points } => {
                if points.is_empty() {
                    return Err(Error::Config("explicit checkpoint list is empty".into()));
                }
                if points.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config(
                        "checkpoints must be strictly increasing".into(),
                    ));
                }
                if points[0] < 1 || *points.last().unwrap() > horizon {
                    return Err(Error::Config(format!(
                        "checkpoints must lie in [1, {horizon}]"
                    )));
                }
                Ok(points.clone())
            }
        }
    }
}

/// Complete declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct ExperimentConfig<S> {
    pub name: String,
    pub instance: BanditInstance<S>,
    pub learner: LearnerSpec,
    pub attack: AttackStrategy,
    /// Confidence level δ of the attacker's width β.
    pub delta: S,
    pub horizon: u64,
    pub trials: u64,
    pub base_seed: u64,
    #[serde(default)]
    pub checkpoints: CheckpointGrid,
    #[serde(default)]
    pub full_log: bool,
}

impl<S: Scalar> ExperimentConfig<S> {
    pub fn num_arms(&self) -> usize {
        self.instance.num_arms()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_arms();
        if self.horizon < k as u64 {
            return Err(Error::Config(format!(
                "horizon {} is shorter than the {k} initialization rounds",
                self.horizon
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("at least one trial is required".into()));
        }
        if !(self.delta > S::zero() && self.delta < S::one()) {
            return Err(Error::Config(format!(
                "confidence level δ must lie in (0, 1), got {}",
                self.delta
            )));
        }
        self.attack.validate()?;
        self.checkpoints.points(self.horizon)?;
        if let LearnerSpec::EpsilonGreedy {
            schedule,
            init_order,
        } = &self.learner
        {
            schedule.validate()?;
            if !init_order.is_empty() {
                crate::learners::validate_init_order(init_order, k)?;
            }
        }
        if self.attack == AttackStrategy::AdaptiveEgreedy
            && self.first_pulled_arm() != self.instance.target()
        {
            return Err(Error::Config(
                "the adaptive ε-greedy attack needs the target arm pulled first".into(),
            ));
        }
        Ok(())
    }

    fn first_pulled_arm(&self) -> usize {
        match &self.learner {
            LearnerSpec::EpsilonGreedy { init_order, .. } if !init_order.is_empty() => {
                init_order[0]
            }
            LearnerSpec::EpsilonGreedy { .. } => {
                default_init_order(self.num_arms(), self.instance.target())[0]
            }
            LearnerSpec::Ucb => 0,
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        self.attack.warnings()
    }
}

/// Event-E bookkeeping, evaluated on the fly.
struct EventMonitor {
    violation: Option<EventViolation>,
}

impl EventMonitor {
    fn check<S: Scalar>(
        &mut self,
        t: u64,
        arms: impl Iterator<Item = usize>,
        instance: &BanditInstance<S>,
        attacker: &Attacker<S>,
    ) -> Result<()> {
        if self.violation.is_some() {
            return Ok(());
        }
        let state = attacker.state();
        for arm in arms {
            let n = state.count(arm);
            let mean = state
                .pre_attack_mean(arm)
                .expect("all arms pulled by t > K");
            if !((mean - instance.mean(arm)).abs() < state.beta(n)?) {
                self.violation = Some(EventViolation { t, arm });
                return Ok(());
            }
        }
        Ok(())
    }
}

/// Runs trial `trial_index` of `config`.
pub fn run_trial<S: Scalar>(
    config: &ExperimentConfig<S>,
    trial_index: u64,
) -> Result<TrialResult<S>> {
    config.validate()?;
    let instance = &config.instance;
    let k = instance.num_arms();
    let target = instance.target();
    let grid = config.checkpoints.points(config.horizon)?;

    let mut rng = RngStream::new(config.base_seed, trial_index);
    let mut learner = Learner::new(&config.learner, k, target, instance.sigma())?;
    let mut attacker = Attacker::new(config.attack, instance, config.delta)?;
    let mut cost = CompensatedSum::<S>::new();
    let mut monitor = EventMonitor { violation: None };
    let mut exploitation_violations = 0u64;
    let mut last_attack: Vec<Option<AttackSnapshot>> = vec![None; k];
    let mut checkpoints = Vec::with_capacity(grid.len());
    let mut next_checkpoint = grid.iter().copied().peekable();
    let mut log = config
        .full_log
        .then(|| Vec::with_capacity(config.horizon as usize));

    for t in 1..=config.horizon {
        let selection = learner.select(&mut rng);
        let arm = selection.arm;
        let pre_reward = instance.sample_reward(arm, &mut rng)?;
        let alpha = attacker.attack(t, arm, pre_reward)?;
        let post_reward = pre_reward - alpha;
        learner.observe(arm, post_reward)?;
        attacker.observe(arm, pre_reward, alpha)?;
        cost.add(alpha.abs());
        if alpha > S::zero() {
            let state = attacker.state();
            last_attack[arm] = Some(AttackSnapshot {
                round: t,
                arm_pulls: state.count(arm),
                target_pulls: state.count(target),
            });
        }

        if t as usize > k {
            if t as usize == k + 1 {
                monitor.check(t, 0..k, instance, &attacker)?;
            } else {
                monitor.check(t, std::iter::once(arm), instance, &attacker)?;
            }
            if !selection.explored && arm != target {
                exploitation_violations += 1;
            }
        }
        if let Some(log) = log.as_mut() {
            log.push(RoundRecord {
                t,
                arm,
                pre_reward,
                alpha,
                post_reward,
                explored: selection.explored,
            });
        }
        if next_checkpoint.peek() == Some(&t) {
            next_checkpoint.next();
            let state = attacker.state();
            checkpoints.push(Checkpoint {
                t,
                cost: cost.value(),
                target_pulls: state.count(target),
                pulls: state.counts().to_vec(),
                attack: (0..k).map(|a| state.cum_attack(a)).collect(),
                last_attack: last_attack.clone(),
            });
        }
    }

    Ok(TrialResult {
        trial: trial_index,
        seed: config.base_seed,
        stream_id: trial_index,
        checkpoints,
        event_e_holds: monitor.violation.is_none(),
        event_e_violation: monitor.violation,
        exploitation_violations,
        log,
    })
}

/// Five-number summary of one metric across trials at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: stats::mean(values),
            median: stats::quantile_sorted(&sorted, 0.5),
            p05: stats::quantile_sorted(&sorted, 0.05),
            p95: stats::quantile_sorted(&sorted, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub t: u64,
    pub cost: Summary,
    pub target_pulls: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub points: Vec<AggregatePoint>,
    pub event_e_fraction: f64,
}

impl Aggregate {
    /// Reduces trials in trial-index order, so the result does not depend on
    /// which thread finished first.
    pub fn from_trials<S: Scalar>(trials: &[TrialResult<S>]) -> Self {
        assert!(!trials.is_empty(), "aggregate of zero trials");
        let n_points = trials[0].checkpoints.len();
        let points = (0..n_points)
            .map(|j| {
                let costs: Vec<f64> = trials
                    .iter()
                    .map(|r| r.checkpoints[j].cost.as_f64())
                    .collect();
                let pulls: Vec<f64> = trials
                    .iter()
                    .map(|r| r.checkpoints[j].target_pulls as f64)
                    .collect();
                AggregatePoint {
                    t: trials[0].checkpoints[j].t,
                    cost: Summary::of(&costs),
                    target_pulls: Summary::of(&pulls),
                }
            })
            .collect();
        let holds = trials.iter().filter(|r| r.event_e_holds).count();
        Self {
            points,
            event_e_fraction: holds as f64 / trials.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult<S> {
    pub config: ExperimentConfig<S>,
    pub trials: Vec<TrialResult<S>>,
    pub aggregate: Aggregate,
}

/// Runs every trial of `config` on the current rayon pool.
pub fn run_experiment<S: Scalar>(config: &ExperimentConfig<S>) -> Result<ExperimentResult<S>> {
    config.validate()?;
    let trials = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(config, i))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = Aggregate::from_trials(&trials);
    Ok(ExperimentResult {
        config: config.clone(),
        trials,
        aggregate,
    })
}
