//! The attacker: confidence width, baseline attacks and the adaptive attacks
//! against ε-greedy and UCB.
//!
//! The attacker never reads the learner's state. She mirrors it from what she
//! observes each round (pulled arm, pre-attack reward, her own attack), so the
//! post-attack sum of arm `i` is reconstructed as
//! `Σ r⁰ − Σ α` over the rounds that pulled `i`.

use serde::{Deserialize, Serialize};

use crate::env::{BanditInstance, GapTable};
use crate::error::{domain, Error, Result};
use crate::stats::CompensatedSum;
use crate::Scalar;

/// `β(N) = √((2σ²/N)·ln(π²KN²/(3δ)))`, natural log.
pub fn beta<S: Scalar>(n: u64, num_arms: usize, sigma: S, delta: S) -> Result<S> {
    if n == 0 {
        return domain("confidence width β(N) needs N ≥ 1");
    }
    beta_continuous(S::from_count(n), num_arms, sigma, delta)
}

/// `β` extended to real arguments `x > 0`, used when bounds are evaluated at
/// non-integer pull counts.
pub fn beta_continuous<S: Scalar>(x: S, num_arms: usize, sigma: S, delta: S) -> Result<S> {
    if !(x > S::zero()) {
        return domain(format!("confidence width needs a positive count, got {x}"));
    }
    if num_arms == 0 {
        return domain("confidence width needs K ≥ 1");
    }
    if !(delta > S::zero() && delta < S::one()) {
        return domain(format!(
            "confidence level δ must lie in (0, 1), got {delta}"
        ));
    }
    let pi2 = S::PI() * S::PI();
    let k = S::from_usize(num_arms).expect("arm count fits scalar");
    let log_term = (pi2 * k * x * x / (S::lit(3.0) * delta)).ln();
    Ok((S::lit(2.0) * sigma * sigma / x * log_term).sqrt())
}

/// Whether a constant attack drags non-target arms down or pushes the target up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantMode {
    DragDown,
    PushUp,
}

/// Which attack the attacker runs, with the parameters that strategy reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum AttackStrategy {
    None,
    /// Knows the true means and shifts each non-target arm by its truncated gap.
    Oracle {
        margin: f64,
    },
    Constant {
        amount: f64,
        mode: ConstantMode,
    },
    AdaptiveEgreedy,
    AdaptiveUcb {
        delta0: f64,
    },
}

impl AttackStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Oracle { .. } => "oracle",
            Self::Constant { .. } => "constant",
            Self::AdaptiveEgreedy => "adaptive_egreedy",
            Self::AdaptiveUcb { .. } => "adaptive_ucb",
        }
    }

    /// True for strategies whose attacks are never negative.
    pub fn is_non_negative(&self) -> bool {
        !matches!(
            self,
            Self::Constant {
                mode: ConstantMode::PushUp,
                ..
            }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::Config(format!(
                "{what} must be finite and non-negative, got {v}"
            )))
        };
        match *self {
            Self::Oracle { margin } if !(margin >= 0.0 && margin.is_finite()) => {
                bad("oracle margin ε", margin)
            }
            Self::Constant { amount, .. } if !(amount >= 0.0 && amount.is_finite()) => {
                bad("constant attack amount A", amount)
            }
            Self::AdaptiveUcb { delta0 } if !(delta0 >= 0.0 && delta0.is_finite()) => {
                bad("UCB attack margin Δ₀", delta0)
            }
            _ => Ok(()),
        }
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        match *self {
            Self::Oracle { margin: 0.0 } => vec![
                "oracle attack with margin 0: success is only guaranteed for a strictly positive margin"
                    .to_string(),
            ],
            _ => vec![],
        }
    }
}

/// `1{arm ≠ target}·Δ^ε_arm`.
pub fn oracle_alpha<S: Scalar>(arm: usize, gaps: &GapTable<S>, target: usize) -> S {
    if arm == target {
        S::zero()
    } else {
        gaps.truncated_gaps[arm]
    }
}

/// Drag-down: `A` on every non-target arm. Push-up: `−A` on the target arm.
pub fn constant_alpha<S: Scalar>(arm: usize, amount: S, mode: ConstantMode, target: usize) -> S {
    match mode {
        ConstantMode::DragDown if arm != target => amount,
        ConstantMode::PushUp if arm == target => -amount,
        _ => S::zero(),
    }
}

/// The attacker's view of the run so far.
#[derive(Debug, Clone)]
pub struct AttackerState<S> {
    counts: Vec<u64>,
    pre_sums: Vec<CompensatedSum<S>>,
    cum_attack: Vec<CompensatedSum<S>>,
    delta: S,
    sigma: S,
    target: usize,
}

impl<S: Scalar> AttackerState<S> {
    pub fn new(num_arms: usize, target: usize, sigma: S, delta: S) -> Result<Self> {
        if target >= num_arms {
            return domain(format!("target arm {} out of range", target + 1));
        }
        if !(delta > S::zero() && delta < S::one()) {
            return Err(Error::Config(format!(
                "confidence level δ must lie in (0, 1), got {delta}"
            )));
        }
        Ok(Self {
            counts: vec![0; num_arms],
            pre_sums: vec![CompensatedSum::new(); num_arms],
            cum_attack: vec![CompensatedSum::new(); num_arms],
            delta,
            sigma,
            target,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn delta(&self) -> S {
        self.delta
    }

    pub fn sigma(&self) -> S {
        self.sigma
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `Σ_{s∈τ_i(t)} r⁰_s`.
    pub fn pre_attack_sum(&self, arm: usize) -> S {
        self.pre_sums[arm].value()
    }

    /// `Σ_{s∈τ_i(t)} α_s`.
    pub fn cum_attack(&self, arm: usize) -> S {
        self.cum_attack[arm].value()
    }

    pub fn pre_attack_mean(&self, arm: usize) -> Option<S> {
        let n = self.counts[arm];
        (n > 0).then(|| self.pre_attack_sum(arm) / S::from_count(n))
    }

    /// Reconstructed `μ̂_i(t)·N_i(t)`: what the learner has summed for `arm`.
    pub fn post_attack_sum(&self, arm: usize) -> S {
        self.pre_attack_sum(arm) - self.cum_attack(arm)
    }

    pub fn post_attack_mean(&self, arm: usize) -> Option<S> {
        let n = self.counts[arm];
        (n > 0).then(|| self.post_attack_sum(arm) / S::from_count(n))
    }

    pub fn beta(&self, n: u64) -> Result<S> {
        beta(n, self.num_arms(), self.sigma, self.delta)
    }

    /// Records the round just played.
    pub fn observe(&mut self, arm: usize, pre_reward: S, alpha: S) -> Result<()> {
        if arm >= self.num_arms() {
            return domain(format!("arm index {arm} out of range"));
        }
        self.counts[arm] += 1;
        self.pre_sums[arm].add(pre_reward);
        self.cum_attack[arm].add(alpha);
        Ok(())
    }

    /// `μ̂_K − 2β(N_K) − extra_margin`, from the current mirror of the target.
    pub fn target_threshold(&self, extra_margin: S) -> Result<S> {
        let n_target = self.counts[self.target];
        if n_target == 0 {
            return Err(Error::Protocol(format!(
                "target arm {} has not been pulled yet",
                self.target + 1
            )));
        }
        let mean = self.post_attack_sum(self.target) / S::from_count(n_target);
        Ok(mean - S::lit(2.0) * self.beta(n_target)? - extra_margin)
    }

    /// Smallest `α ≥ 0` that leaves the post-attack mean of `arm`, after this
    /// round's reward, at or below `threshold`.
    fn alpha_to_reach(&self, arm: usize, pre_reward: S, threshold: S) -> S {
        let n_next = S::from_count(self.counts[arm] + 1);
        (self.post_attack_sum(arm) + pre_reward - threshold * n_next).positive_part()
    }
}

/// Attack against ε-greedy for the round in which `arm` was pulled with
/// pre-attack reward `pre_reward`.
///
/// Pushes the pulled arm's post-attack mean down to `μ̂_K − 2β(N_K)`. The
/// target is not pulled this round, so its statistics are those of `t − 1`.
pub fn egreedy_alpha<S: Scalar>(state: &AttackerState<S>, arm: usize, pre_reward: S) -> Result<S> {
    if arm >= state.num_arms() {
        return domain(format!("arm index {arm} out of range"));
    }
    if arm == state.target {
        return Ok(S::zero());
    }
    let threshold = state.target_threshold(S::zero())?;
    Ok(state.alpha_to_reach(arm, pre_reward, threshold))
}

/// Attack against UCB at round `t > K`: push the pulled arm's post-attack mean
/// down to `μ̂_K(t−1) − 2β(N_K(t−1)) − Δ₀`.
pub fn ucb_alpha<S: Scalar>(
    state: &AttackerState<S>,
    arm: usize,
    pre_reward: S,
    delta0: S,
    t: u64,
) -> Result<S> {
    if t as usize <= state.num_arms() {
        return Err(Error::Protocol(format!(
            "UCB attack requested at round {t}; no attack during the first {} rounds",
            state.num_arms()
        )));
    }
    if arm >= state.num_arms() {
        return domain(format!("arm index {arm} out of range"));
    }
    if arm == state.target {
        return Ok(S::zero());
    }
    let threshold = state.target_threshold(delta0)?;
    Ok(state.alpha_to_reach(arm, pre_reward, threshold))
}

/// A running attacker: strategy plus mirrored state.
#[derive(Debug, Clone)]
pub struct Attacker<S> {
    strategy: AttackStrategy,
    state: AttackerState<S>,
    gaps: Option<GapTable<S>>,
}

impl<S: Scalar> Attacker<S> {
    pub fn new(strategy: AttackStrategy, instance: &BanditInstance<S>, delta: S) -> Result<Self> {
        strategy.validate()?;
        let gaps = match strategy {
            AttackStrategy::Oracle { margin } => Some(instance.compute_gaps(S::lit(margin))?),
            _ => None,
        };
        Ok(Self {
            strategy,
            state: AttackerState::new(
                instance.num_arms(),
                instance.target(),
                instance.sigma(),
                delta,
            )?,
            gaps,
        })
    }

    pub fn strategy(&self) -> &AttackStrategy {
        &self.strategy
    }

    pub fn state(&self) -> &AttackerState<S> {
        &self.state
    }

    /// Decides `α_t` after seeing `(I_t, r⁰_t)`.
    pub fn attack(&self, t: u64, arm: usize, pre_reward: S) -> Result<S> {
        let target = self.state.target;
        match self.strategy {
            AttackStrategy::None => Ok(S::zero()),
            AttackStrategy::Oracle { .. } => Ok(oracle_alpha(
                arm,
                self.gaps
                    .as_ref()
                    .expect("oracle gaps built at construction"),
                target,
            )),
            AttackStrategy::Constant { amount, mode } => {
                Ok(constant_alpha(arm, S::lit(amount), mode, target))
            }
            AttackStrategy::AdaptiveEgreedy => egreedy_alpha(&self.state, arm, pre_reward),
            AttackStrategy::AdaptiveUcb { delta0 } => {
                if t as usize <= self.state.num_arms() {
                    Ok(S::zero())
                } else {
                    ucb_alpha(&self.state, arm, pre_reward, S::lit(delta0), t)
                }
            }
        }
    }

    pub fn observe(&mut self, arm: usize, pre_reward: S, alpha: S) -> Result<()> {
        self.state.observe(arm, pre_reward, alpha)
    }
}
