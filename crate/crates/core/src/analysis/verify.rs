//! Structural and statistical checks over finished trials.
//!
//! Each check yields one [`Verdict`]. Checks that do not apply to the
//! configured learner/attack pair say so, and checks whose inputs are missing
//! (for instance when results were reloaded from a file lacking a metric)
//! report themselves as not checkable rather than passing silently.
//!
//! Arm numbers in reports are 1-based.

use serde::{Deserialize, Serialize};

use crate::attackers::{beta, AttackStrategy, ConstantMode};
use crate::learners::LearnerSpec;
use crate::protocol::{AttackSnapshot, ExperimentConfig, TrialResult};
use crate::Scalar;

/// Data-level view of one trial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub trial: u64,
    pub event_e: Option<bool>,
    pub exploitation_violations: Option<u64>,
    pub checkpoints: Vec<CheckpointView>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointView {
    pub t: u64,
    pub cost: Option<f64>,
    pub target_pulls: Option<u64>,
    pub pulls: Option<Vec<u64>>,
    pub attack: Option<Vec<f64>>,
    pub last_attack: Option<Vec<Option<AttackSnapshot>>>,
}

impl<S: Scalar> From<&TrialResult<S>> for TrialView {
    fn from(r: &TrialResult<S>) -> Self {
        Self {
            trial: r.trial,
            event_e: Some(r.event_e_holds),
            exploitation_violations: Some(r.exploitation_violations),
            checkpoints: r
                .checkpoints
                .iter()
                .map(|c| CheckpointView {
                    t: c.t,
                    cost: Some(c.cost.as_f64()),
                    target_pulls: Some(c.target_pulls),
                    pulls: Some(c.pulls.clone()),
                    attack: Some(c.attack.iter().map(|a| a.as_f64()).collect()),
                    last_attack: Some(c.last_attack.clone()),
                })
                .collect(),
        }
    }
}

/// Where a check failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub trial: u64,
    pub t: Option<u64>,
    pub arm: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Pass {
        /// Number of individual comparisons made.
        evaluated: u64,
    },
    Fail {
        failures: u64,
        first: Counterexample,
    },
    NotApplicable {
        reason: String,
    },
    NotCheckable {
        reason: String,
    },
}

impl Verdict {
    pub fn is_fail(&self) -> bool {
        matches!(self, Self::Fail { .. })
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Self::Pass { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: String,
    pub description: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub experiment: String,
    pub trials: u64,
    pub checks: Vec<CheckReport>,
}

impl VerifyReport {
    /// True when no applicable check failed.
    pub fn passed(&self) -> bool {
        !self.checks.iter().any(|c| c.verdict.is_fail())
    }

    pub fn check(&self, id: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.id == id)
    }
}

pub const EVENT_E_FREQUENCY: &str = "event_e_frequency";
pub const MONOTONE_CURVES: &str = "monotone_curves";
pub const TARGET_NEVER_ATTACKED: &str = "target_never_attacked";
pub const ATTACK_CONSERVATION: &str = "attack_conservation";
pub const EGREEDY_EXPLOITATION: &str = "egreedy_exploitation_pulls_target";
pub const EGREEDY_ARM_COST: &str = "egreedy_per_arm_cost";
pub const UCB_ARM_PULLS: &str = "ucb_per_arm_pulls";
pub const UCB_ARM_COST: &str = "ucb_per_arm_cost";

/// Accumulates comparisons and remembers the first failure.
struct Tally {
    evaluated: u64,
    failures: u64,
    first: Option<Counterexample>,
}

impl Tally {
    fn new() -> Self {
        Self {
            evaluated: 0,
            failures: 0,
            first: None,
        }
    }

    fn record(&mut self, ok: bool, at: impl FnOnce() -> Counterexample) {
        self.evaluated += 1;
        if !ok {
            self.failures += 1;
            if self.first.is_none() {
                self.first = Some(at());
            }
        }
    }

    fn verdict(self) -> Verdict {
        match self.first {
            Some(first) => Verdict::Fail {
                failures: self.failures,
                first,
            },
            None => Verdict::Pass {
                evaluated: self.evaluated,
            },
        }
    }
}

struct Ctx {
    k: usize,
    target: usize,
    sigma: f64,
    delta: f64,
    gaps: Vec<f64>,
    learner: LearnerSpec,
    attack: AttackStrategy,
}

impl Ctx {
    fn beta(&self, n: u64) -> f64 {
        beta(n, self.k, self.sigma, self.delta).expect("n ≥ 1 and δ validated")
    }
}

fn missing(what: &str) -> Verdict {
    Verdict::NotCheckable {
        reason: format!("results carry no {what}"),
    }
}

fn not_applicable(reason: impl Into<String>) -> Verdict {
    Verdict::NotApplicable {
        reason: reason.into(),
    }
}

/// Runs every check on `trials` of the experiment described by `config`.
pub fn verify_suite<S: Scalar>(config: &ExperimentConfig<S>, trials: &[TrialView]) -> VerifyReport {
    let inst = &config.instance;
    let gaps = inst
        .compute_gaps(S::zero())
        .expect("zero margin is valid")
        .gaps
        .iter()
        .map(|g| g.as_f64())
        .collect();
    let ctx = Ctx {
        k: inst.num_arms(),
        target: inst.target(),
        sigma: inst.sigma().as_f64(),
        delta: config.delta.as_f64(),
        gaps,
        learner: config.learner.clone(),
        attack: config.attack,
    };
    let checks = vec![
        CheckReport {
            id: EVENT_E_FREQUENCY.into(),
            description: "fraction of trials in which every pre-attack mean stays within β of its true mean is at least 1 − δ − 3 binomial standard errors".into(),
            verdict: event_e_frequency(&ctx, trials),
        },
        CheckReport {
            id: MONOTONE_CURVES.into(),
            description: "cumulative cost and target pulls are non-decreasing, target pulls ≤ t".into(),
            verdict: monotone_curves(trials),
        },
        CheckReport {
            id: TARGET_NEVER_ATTACKED.into(),
            description: "the target arm's cumulative attack stays exactly 0".into(),
            verdict: target_never_attacked(&ctx, trials),
        },
        CheckReport {
            id: ATTACK_CONSERVATION.into(),
            description: "per-arm cumulative attacks sum to the total cost".into(),
            verdict: attack_conservation(&ctx, trials),
        },
        CheckReport {
            id: EGREEDY_EXPLOITATION.into(),
            description: "in event-E trials every ε-greedy exploitation round pulls the target".into(),
            verdict: egreedy_exploitation(&ctx, trials),
        },
        CheckReport {
            id: EGREEDY_ARM_COST.into(),
            description: "in event-E trials, Σα_i < (Δ_i + β(N_i) + 3β(N_K))·N_i at the last positive attack on arm i".into(),
            verdict: egreedy_arm_cost(&ctx, trials),
        },
        CheckReport {
            id: UCB_ARM_PULLS.into(),
            description: "in event-E trials with t ≥ 2K, N_i(t) ≤ min{N_K(t), 2 + (9σ²/Δ₀²)·ln t}".into(),
            verdict: ucb_arm_pulls(&ctx, trials),
        },
        CheckReport {
            id: UCB_ARM_COST.into(),
            description: "in event-E trials with t ≥ 2K, Σα_i ≤ N_i·(Δ_i + Δ₀ + 4β(N_i))".into(),
            verdict: ucb_arm_cost(&ctx, trials),
        },
    ];
    VerifyReport {
        experiment: config.name.clone(),
        trials: trials.len() as u64,
        checks,
    }
}

fn event_e_frequency(ctx: &Ctx, trials: &[TrialView]) -> Verdict {
    if ctx.sigma == 0.0 {
        return not_applicable("noise-free rewards: the confidence band has zero width");
    }
    if trials.is_empty() {
        return missing("trials");
    }
    let Some(flags) = trials
        .iter()
        .map(|r| r.event_e)
        .collect::<Option<Vec<bool>>>()
    else {
        return missing("event_E rows");
    };
    let n = flags.len() as f64;
    let frac = flags.iter().filter(|&&e| e).count() as f64 / n;
    let d = ctx.delta;
    let floor = 1.0 - d - 3.0 * (d * (1.0 - d) / n).sqrt();
    let mut tally = Tally::new();
    tally.record(frac >= floor, || Counterexample {
        trial: 0,
        t: None,
        arm: None,
        detail: format!("event E held in {frac:.4} of {n} trials, below {floor:.4}"),
    });
    tally.verdict()
}

fn monotone_curves(trials: &[TrialView]) -> Verdict {
    let mut tally = Tally::new();
    for r in trials {
        let mut prev: Option<(f64, u64)> = None;
        for c in &r.checkpoints {
            let (Some(cost), Some(pulls)) = (c.cost, c.target_pulls) else {
                return missing("cost_cum/pulls_target rows");
            };
            let ok = pulls <= c.t && prev.is_none_or(|(pc, pp)| cost >= pc && pulls >= pp);
            tally.record(ok, || Counterexample {
                trial: r.trial,
                t: Some(c.t),
                arm: None,
                detail: format!("cost {cost}, target pulls {pulls} after {prev:?}"),
            });
            prev = Some((cost, pulls));
        }
    }
    tally.verdict()
}

fn target_never_attacked(ctx: &Ctx, trials: &[TrialView]) -> Verdict {
    match ctx.attack {
        AttackStrategy::None => return not_applicable("no attack"),
        AttackStrategy::Constant {
            mode: ConstantMode::PushUp,
            ..
        } => return not_applicable("push-up attacks act on the target by design"),
        _ => {}
    }
    let mut tally = Tally::new();
    for r in trials {
        for c in &r.checkpoints {
            let Some(attack) = &c.attack else {
                return missing("attack_arm rows");
            };
            let a = attack[ctx.target];
            tally.record(a == 0.0, || Counterexample {
                trial: r.trial,
                t: Some(c.t),
                arm: Some(ctx.target + 1),
                detail: format!("target accumulated attack {a}"),
            });
        }
    }
    tally.verdict()
}

fn attack_conservation(ctx: &Ctx, trials: &[TrialView]) -> Verdict {
    if ctx.attack == AttackStrategy::None {
        return not_applicable("no attack");
    }
    if !ctx.attack.is_non_negative() {
        return not_applicable("signed attacks: cost is Σ|α|, not Σα");
    }
    let mut tally = Tally::new();
    for r in trials {
        for c in &r.checkpoints {
            let (Some(attack), Some(cost)) = (&c.attack, c.cost) else {
                return missing("attack_arm/cost_cum rows");
            };
            let total: f64 = attack.iter().sum();
            tally.record((total - cost).abs() <= 1e-9 * cost.abs().max(1.0), || {
                Counterexample {
                    trial: r.trial,
                    t: Some(c.t),
                    arm: None,
                    detail: format!("per-arm attacks sum to {total}, cost is {cost}"),
                }
            });
        }
    }
    tally.verdict()
}

fn gate_egreedy(ctx: &Ctx) -> Option<Verdict> {
    if ctx.attack != AttackStrategy::AdaptiveEgreedy {
        return Some(not_applicable(format!(
            "attack is {}, check covers the adaptive ε-greedy attack",
            ctx.attack.name()
        )));
    }
    if !matches!(ctx.learner, LearnerSpec::EpsilonGreedy { .. }) {
        return Some(not_applicable("learner is not ε-greedy"));
    }
    if ctx.delta > 0.5 {
        return Some(not_applicable("guarantee needs δ ≤ 1/2"));
    }
    None
}

fn gate_ucb(ctx: &Ctx) -> Option<Verdict> {
    if !matches!(ctx.attack, AttackStrategy::AdaptiveUcb { .. }) {
        return Some(not_applicable(format!(
            "attack is {}, check covers the adaptive UCB attack",
            ctx.attack.name()
        )));
    }
    if ctx.learner != LearnerSpec::Ucb {
        return Some(not_applicable("learner is not UCB"));
    }
    if ctx.delta > 0.5 {
        return Some(not_applicable("guarantee needs δ ≤ 1/2"));
    }
    None
}

/// Trials in which event E held; `Err` when the flag is missing.
fn event_trials(trials: &[TrialView]) -> Result<Vec<&TrialView>, Verdict> {
    let mut out = vec![];
    for r in trials {
        match r.event_e {
            Some(true) => out.push(r),
            Some(false) => {}
            None => return Err(missing("event_E rows")),
        }
    }
    Ok(out)
}

fn egreedy_exploitation(ctx: &Ctx, trials: &[TrialView]) -> Verdict {
    if let Some(v) = gate_egreedy(ctx) {
        return v;
    }
    let selected = match event_trials(trials) {
        Ok(s) => s,
        Err(v) => return v,
    };
    let mut tally = Tally::new();
    for r in selected {
        let Some(v) = r.exploitation_violations else {
            return missing("exploit_violations rows");
        };
        tally.record(v == 0, || Counterexample {
            trial: r.trial,
            t: None,
            arm: None,
            detail: format!("{v} exploitation rounds pulled a non-target arm"),
        });
    }
    tally.verdict()
}

// The bound holds at the rounds where arm i's cumulative attack last changed,
// with N_K taken at that round; β(N_K) keeps shrinking afterwards while the
// sum stays fixed, so later rounds are compared against the snapshot.
fn egreedy_arm_cost(ctx: &Ctx, trials: &[TrialView]) -> Verdict {
    if let Some(v) = gate_egreedy(ctx) {
        return v;
    }
    let selected = match event_trials(trials) {
        Ok(s) => s,
        Err(v) => return v,
    };
    let mut tally = Tally::new();
    for r in selected {
        for c in &r.checkpoints {
            let (Some(attack), Some(snaps)) = (&c.attack, &c.last_attack) else {
                return missing("attack_arm/lastatk rows");
            };
            for arm in (0..ctx.k).filter(|&a| a != ctx.target) {
                let Some(s) = snaps[arm] else { continue };
                // event E constrains statistics only after the first K rounds
                if s.round as usize <= ctx.k {
                    continue;
                }
                let bound =
                    (ctx.gaps[arm] + ctx.beta(s.arm_pulls) + 3.0 * ctx.beta(s.target_pulls))
                        * s.arm_pulls as f64;
                let spent = attack[arm];
                tally.record(spent < bound, || Counterexample {
                    trial: r.trial,
                    t: Some(c.t),
                    arm: Some(arm + 1),
                    detail: format!(
                        "cumulative attack {spent} ≥ bound {bound} (N_i = {}, N_K = {} at round {})",
                        s.arm_pulls, s.target_pulls, s.round
                    ),
                });
            }
        }
    }
    tally.verdict()
}

fn ucb_arm_pulls(ctx: &Ctx, trials: &[TrialView]) -> Verdict {
    if let Some(v) = gate_ucb(ctx) {
        return v;
    }
    let AttackStrategy::AdaptiveUcb { delta0 } = ctx.attack else {
        unreachable!()
    };
    let selected = match event_trials(trials) {
        Ok(s) => s,
        Err(v) => return v,
    };
    let mut tally = Tally::new();
    for r in selected {
        for c in r.checkpoints.iter().filter(|c| c.t >= 2 * ctx.k as u64) {
            let Some(pulls) = &c.pulls else {
                return missing("pulls_arm rows");
            };
            let log_bound = if delta0 > 0.0 {
                2.0 + 9.0 * ctx.sigma * ctx.sigma / (delta0 * delta0) * (c.t as f64).ln()
            } else {
                f64::INFINITY
            };
            let nk = pulls[ctx.target];
            for arm in (0..ctx.k).filter(|&a| a != ctx.target) {
                let ni = pulls[arm];
                let ok = ni <= nk && (ni as f64) <= log_bound;
                tally.record(ok, || Counterexample {
                    trial: r.trial,
                    t: Some(c.t),
                    arm: Some(arm + 1),
                    detail: format!("N_i = {ni}, N_K = {nk}, log bound {log_bound}"),
                });
            }
        }
    }
    tally.verdict()
}

// The argument bounds the sum at rounds t ≥ 2K where arm i was attacked; the
// bound grows with N_i, so it carries to every later checkpoint. Arms whose
// last positive attack predates round 2K are outside its reach.
fn ucb_arm_cost(ctx: &Ctx, trials: &[TrialView]) -> Verdict {
    if let Some(v) = gate_ucb(ctx) {
        return v;
    }
    let AttackStrategy::AdaptiveUcb { delta0 } = ctx.attack else {
        unreachable!()
    };
    let selected = match event_trials(trials) {
        Ok(s) => s,
        Err(v) => return v,
    };
    let two_k = 2 * ctx.k as u64;
    let mut tally = Tally::new();
    for r in selected {
        for c in r.checkpoints.iter().filter(|c| c.t >= two_k) {
            let (Some(attack), Some(pulls), Some(snaps)) = (&c.attack, &c.pulls, &c.last_attack)
            else {
                return missing("attack_arm/pulls_arm/lastatk rows");
            };
            for arm in (0..ctx.k).filter(|&a| a != ctx.target) {
                let ni = pulls[arm];
                match snaps[arm] {
                    Some(s) if s.round >= two_k => {}
                    _ => continue,
                }
                let bound = ni as f64 * (ctx.gaps[arm] + delta0 + 4.0 * ctx.beta(ni));
                let spent = attack[arm];
                tally.record(spent <= bound, || Counterexample {
                    trial: r.trial,
                    t: Some(c.t),
                    arm: Some(arm + 1),
                    detail: format!("cumulative attack {spent} > bound {bound} (N_i = {ni})"),
                });
            }
        }
    }
    tally.verdict()
}
