//! The victim learners: ε-greedy with a decaying schedule and UCB tuned for
//! σ²-sub-Gaussian rewards.
//!
//! A learner only ever sees the post-attack reward. It has no access to the
//! pre-attack reward or to the attack value.

use serde::{Deserialize, Serialize};

use crate::env::RngStream;
use crate::error::{domain, Error, Result};
use crate::Scalar;

/// Per-arm pull counts and post-attack empirical means.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState<S> {
    counts: Vec<u64>,
    means: Vec<S>,
    round: u64,
}

impl<S: Scalar> LearnerState<S> {
    pub fn new(num_arms: usize) -> Self {
        Self {
            counts: vec![0; num_arms],
            means: vec![S::zero(); num_arms],
            round: 0,
        }
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    /// Empirical mean of `arm`; `None` before its first pull.
    pub fn mean(&self, arm: usize) -> Option<S> {
        (self.counts[arm] > 0).then(|| self.means[arm])
    }

    /// Raw means. Entries for unpulled arms are zero and carry no meaning.
    pub fn means(&self) -> &[S] {
        &self.means
    }

    /// Number of completed rounds `t`.
    pub fn round(&self) -> u64 {
        self.round
    }

    /// Records a post-attack reward on `arm`.
    pub fn update(&mut self, arm: usize, reward: S) -> Result<()> {
        if arm >= self.num_arms() {
            return domain(format!("arm index {arm} out of range"));
        }
        let n = self.counts[arm] + 1;
        self.counts[arm] = n;
        let mean = self.means[arm];
        self.means[arm] = mean + (reward - mean) / S::from_count(n);
        self.round += 1;
        Ok(())
    }

    fn argmax_by(&self, mut score: impl FnMut(usize) -> S) -> usize {
        let mut best = 0;
        let mut best_score = score(0);
        for arm in 1..self.num_arms() {
            let s = score(arm);
            if s > best_score {
                best = arm;
                best_score = s;
            }
        }
        best
    }
}

/// Exploration probability schedule for ε-greedy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExplorationSchedule {
    /// `ε_t = min{1, c·K/t}`.
    Decaying { c: f64 },
    /// `ε_t = min{1, 1/t}`, independent of K.
    InverseTime,
    /// `ε_t = ε` for every round.
    Constant { epsilon: f64 },
}

impl ExplorationSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Decaying { c } if !(c > 0.0 && c.is_finite()) => Err(Error::Config(format!(
                "exploration constant c must be positive, got {c}"
            ))),
            Self::Constant { epsilon } if !(0.0..=1.0).contains(&epsilon) => Err(Error::Config(
                format!("constant exploration rate must lie in [0, 1], got {epsilon}"),
            )),
            _ => Ok(()),
        }
    }

    /// Exploration probability at round `t ≥ 1`.
    pub fn epsilon_at(&self, num_arms: usize, t: u64) -> Result<f64> {
        if t == 0 {
            return domain("exploration schedule is defined for t ≥ 1");
        }
        let t = t as f64;
        Ok(match *self {
            Self::Decaying { c } => (c * num_arms as f64 / t).min(1.0),
            Self::InverseTime => (1.0 / t).min(1.0),
            Self::Constant { epsilon } => epsilon,
        })
    }

    /// `Σ_{t=1}^{T} ε_t` by direct summation.
    pub fn total_exploration(&self, num_arms: usize, horizon: u64) -> f64 {
        let mut acc = crate::stats::CompensatedSum::<f64>::new();
        for t in 1..=horizon {
            acc.add(self.epsilon_at(num_arms, t).expect("t ≥ 1"));
        }
        acc.value()
    }
}

/// Outcome of one arm selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub arm: usize,
    /// True for ε-greedy exploration rounds; always false for UCB.
    pub explored: bool,
}

/// One ε-greedy decision for round `state.round() + 1`.
///
/// Consumes one uniform draw for the exploration coin and, only when
/// exploring, one draw for the arm. Exploitation ties go to the lowest index.
pub fn egreedy_select<S: Scalar>(
    state: &LearnerState<S>,
    schedule: &ExplorationSchedule,
    rng: &mut RngStream,
) -> Selection {
    let k = state.num_arms();
    let epsilon = schedule
        .epsilon_at(k, state.round() + 1)
        .expect("round + 1 ≥ 1");
    if rng.uniform() < epsilon {
        Selection {
            arm: rng.index(k),
            explored: true,
        }
    } else {
        Selection {
            arm: state.argmax_by(|i| state.means[i]),
            explored: false,
        }
    }
}

/// `μ̂_i(t−1) + 3σ·√(ln t / N_i(t−1))`, evaluated on the state after `t − 1`
/// rounds.
pub fn ucb_index<S: Scalar>(state: &LearnerState<S>, t: u64, arm: usize, sigma: S) -> Result<S> {
    if arm >= state.num_arms() {
        return domain(format!("arm index {arm} out of range"));
    }
    let n = state.counts[arm];
    if n == 0 {
        return domain(format!(
            "UCB index of arm {} before its first pull",
            arm + 1
        ));
    }
    if t < 2 {
        return domain("UCB index is defined for t ≥ 2");
    }
    let bonus = S::lit(3.0) * sigma * (S::from_count(t).ln() / S::from_count(n)).sqrt();
    Ok(state.means[arm] + bonus)
}

/// UCB arm choice at round `t`: arm `t` during the first K rounds, otherwise
/// the largest index with ties to the lowest arm.
pub fn ucb_select<S: Scalar>(state: &LearnerState<S>, t: u64, sigma: S) -> Result<usize> {
    if t == 0 {
        return domain("UCB selection is defined for t ≥ 1");
    }
    let k = state.num_arms();
    if t as usize <= k {
        return Ok(t as usize - 1);
    }
    if let Some(arm) = state.counts.iter().position(|&n| n == 0) {
        return Err(Error::Protocol(format!(
            "arm {} never pulled before round {t}",
            arm + 1
        )));
    }
    let ln_t = S::from_count(t).ln();
    let scale = S::lit(3.0) * sigma;
    Ok(
        state
            .argmax_by(|i| state.means[i] + scale * (ln_t / S::from_count(state.counts[i])).sqrt()),
    )
}

/// Learner configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    EpsilonGreedy {
        schedule: ExplorationSchedule,
        /// Arms pulled during the first K rounds (0-based). Empty means the
        /// target first, then the rest in ascending order.
        #[serde(default)]
        init_order: Vec<usize>,
    },
    Ucb,
}

impl LearnerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EpsilonGreedy { .. } => "egreedy",
            Self::Ucb => "ucb",
        }
    }
}

/// A running learner: its state plus the rule that drives it.
#[derive(Debug, Clone)]
pub struct Learner<S> {
    state: LearnerState<S>,
    rule: Rule<S>,
}

#[derive(Debug, Clone)]
enum Rule<S> {
    EpsilonGreedy {
        schedule: ExplorationSchedule,
        init_order: Vec<usize>,
    },
    Ucb {
        sigma: S,
    },
}

/// Target first, then the remaining arms ascending.
pub fn default_init_order(num_arms: usize, target: usize) -> Vec<usize> {
    std::iter::once(target)
        .chain((0..num_arms).filter(|&a| a != target))
        .collect()
}

/// Checks that `order` is a permutation of `0..num_arms`.
pub fn validate_init_order(order: &[usize], num_arms: usize) -> Result<()> {
    let mut seen = vec![false; num_arms];
    if order.len() != num_arms {
        return Err(Error::Config(format!(
            "initialization order must list all {num_arms} arms exactly once"
        )));
    }
    for &a in order {
        if a >= num_arms || seen[a] {
            return Err(Error::Config(format!(
                "initialization order must be a permutation of the arms, got {:?}",
                order.iter().map(|a| a + 1).collect::<Vec<_>>()
            )));
        }
        seen[a] = true;
    }
    Ok(())
}

impl<S: Scalar> Learner<S> {
    pub fn new(spec: &LearnerSpec, num_arms: usize, target: usize, sigma: S) -> Result<Self> {
        let rule = match spec {
            LearnerSpec::EpsilonGreedy {
                schedule,
                init_order,
            } => {
                schedule.validate()?;
                let init_order = if init_order.is_empty() {
                    default_init_order(num_arms, target)
                } else {
                    validate_init_order(init_order, num_arms)?;
                    init_order.clone()
                };
                Rule::EpsilonGreedy {
                    schedule: *schedule,
                    init_order,
                }
            }
            LearnerSpec::Ucb => Rule::Ucb { sigma },
        };
        Ok(Self {
            state: LearnerState::new(num_arms),
            rule,
        })
    }

    pub fn state(&self) -> &LearnerState<S> {
        &self.state
    }

    /// Chooses the arm for the next round.
    pub fn select(&self, rng: &mut RngStream) -> Selection {
        let t = self.state.round + 1;
        match &self.rule {
            Rule::EpsilonGreedy {
                schedule,
                init_order,
            } => {
                if (t as usize) <= init_order.len() {
                    Selection {
                        arm: init_order[t as usize - 1],
                        explored: false,
                    }
                } else {
                    egreedy_select(&self.state, schedule, rng)
                }
            }
            Rule::Ucb { sigma } => Selection {
                arm: ucb_select(&self.state, t, *sigma).expect("every arm pulled during init"),
                explored: false,
            },
        }
    }

    /// Feeds back the (post-attack) reward for the arm just pulled.
    pub fn observe(&mut self, arm: usize, reward: S) -> Result<()> {
        self.state.update(arm, reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state_with(rewards: &[(usize, f64)], k: usize) -> LearnerState<f64> {
        let mut s = LearnerState::new(k);
        for &(a, r) in rewards {
            s.update(a, r).unwrap();
        }
        s
    }

    #[test]
    fn epsilon_schedule_examples() {
        let half = ExplorationSchedule::Decaying { c: 0.5 };
        assert_eq!(half.epsilon_at(2, 1).unwrap(), 1.0);
        assert!((half.epsilon_at(2, 10).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(
            half.epsilon_at(2, 10).unwrap(),
            ExplorationSchedule::InverseTime.epsilon_at(2, 10).unwrap()
        );
        let one = ExplorationSchedule::Decaying { c: 1.0 };
        assert_eq!(one.epsilon_at(3, 6).unwrap(), 0.5);
        assert!(matches!(one.epsilon_at(3, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn schedule_validation() {
        assert!(ExplorationSchedule::Decaying { c: 0.0 }.validate().is_err());
        assert!(ExplorationSchedule::Constant { epsilon: 1.5 }
            .validate()
            .is_err());
        assert!(ExplorationSchedule::Constant { epsilon: 0.0 }
            .validate()
            .is_ok());
    }

    #[test]
    fn egreedy_pure_exploitation() {
        let zero = ExplorationSchedule::Constant { epsilon: 0.0 };
        let mut rng = RngStream::new(0, 0);
        let s = state_with(&[(0, 0.2), (1, 0.9)], 2);
        assert_eq!(
            egreedy_select(&s, &zero, &mut rng),
            Selection {
                arm: 1,
                explored: false
            }
        );
        let s = state_with(&[(0, 0.5), (1, 0.5)], 2);
        assert_eq!(egreedy_select(&s, &zero, &mut rng).arm, 0);
    }

    #[test]
    fn egreedy_full_exploration_is_uniform() {
        let one = ExplorationSchedule::Constant { epsilon: 1.0 };
        let mut rng = RngStream::new(11, 3);
        let s = state_with(&[(0, 0.2), (1, 0.9)], 2);
        let n = 100_000;
        let mut first = 0usize;
        for _ in 0..n {
            let sel = egreedy_select(&s, &one, &mut rng);
            assert!(sel.explored);
            first += (sel.arm == 0) as usize;
        }
        let freq = first as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * se, "freq {freq}");
    }

    #[test]
    fn ucb_index_examples() {
        let s = state_with(&[(0, 1.0), (1, 0.0)], 2);
        let idx = ucb_index(&s, 3, 0, 0.1).unwrap();
        assert!((idx - 1.314_444_122_190_461_5).abs() < 1e-12, "{idx}");
        let idx2 = ucb_index(&s, 3, 1, 0.1).unwrap();
        assert!((idx2 - 0.314_444_122_190_461_5).abs() < 1e-12);
        assert_eq!(ucb_index(&s, 7, 0, 0.0).unwrap(), 1.0);

        let s4 = state_with(&[(0, 1.0), (0, 1.0), (0, 1.0), (0, 1.0), (1, 0.0)], 2);
        let b1 = ucb_index(&s, 9, 0, 0.2).unwrap() - 1.0;
        let b4 = ucb_index(&s4, 9, 0, 0.2).unwrap() - 1.0;
        assert!((b4 - b1 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ucb_index_errors() {
        let s = state_with(&[(0, 1.0)], 2);
        assert!(matches!(ucb_index(&s, 3, 1, 0.1), Err(Error::Domain(_))));
        assert!(matches!(ucb_index(&s, 1, 0, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn ucb_select_examples() {
        let s = state_with(&[(0, 1.0)], 3);
        assert_eq!(ucb_select(&s, 2, 0.1).unwrap(), 1);
        let s = state_with(&[(0, 1.0), (1, 0.0)], 2);
        assert_eq!(ucb_select(&s, 3, 0.1).unwrap(), 0);
        let s = state_with(&[(0, 0.3), (1, 0.3), (2, 0.3)], 3);
        assert_eq!(ucb_select(&s, 4, 0.1).unwrap(), 0);
    }

    #[test]
    fn learner_update_examples() {
        let mut s = state_with(&[(0, 0.5)], 2);
        s.update(0, 1.5).unwrap();
        assert_eq!(s.count(0), 2);
        assert_eq!(s.mean(0), Some(1.0));
        assert_eq!(s.round(), 2);

        let mut s = LearnerState::<f64>::new(2);
        assert_eq!(s.mean(1), None);
        s.update(1, -0.25).unwrap();
        assert_eq!(s.mean(1), Some(-0.25));
        assert!(s.update(2, 0.0).is_err());
    }

    #[test]
    fn incremental_mean_matches_batch() {
        let mut rng = RngStream::new(5, 0);
        let mut s = LearnerState::<f64>::new(3);
        let mut sums = [0.0f64; 3];
        let n = 1_000_000;
        for _ in 0..n {
            let arm = rng.index(3);
            let r = 0.3 * arm as f64 + 2.0 * rng.standard_normal();
            sums[arm] += r;
            s.update(arm, r).unwrap();
        }
        assert_eq!(s.counts().iter().sum::<u64>(), s.round());
        for (arm, sum) in sums.iter().enumerate() {
            let batch = sum / s.count(arm) as f64;
            let inc = s.mean(arm).unwrap();
            assert!(
                (inc - batch).abs() <= 1e-10 * batch.abs().max(1.0),
                "arm {arm}: {inc} vs {batch}"
            );
        }
    }

    #[test]
    fn default_init_order_puts_target_first() {
        assert_eq!(default_init_order(4, 2), vec![2, 0, 1, 3]);
        assert!(validate_init_order(&[0, 0, 1], 3).is_err());
        assert!(validate_init_order(&[2, 0, 1], 3).is_ok());
    }

    #[test]
    fn learner_initializes_in_order() {
        let spec = LearnerSpec::EpsilonGreedy {
            schedule: ExplorationSchedule::InverseTime,
            init_order: vec![],
        };
        let mut l = Learner::<f64>::new(&spec, 3, 2, 0.1).unwrap();
        let mut rng = RngStream::new(0, 0);
        let mut order = vec![];
        for _ in 0..3 {
            let sel = l.select(&mut rng);
            assert!(!sel.explored);
            order.push(sel.arm);
            l.observe(sel.arm, 0.0).unwrap();
        }
        assert_eq!(order, vec![2, 0, 1]);

        let mut u = Learner::<f64>::new(&LearnerSpec::Ucb, 3, 2, 0.1).unwrap();
        let mut order = vec![];
        for _ in 0..3 {
            let sel = u.select(&mut rng);
            order.push(sel.arm);
            u.observe(sel.arm, 0.0).unwrap();
        }
        assert_eq!(order, vec![0, 1, 2]);
    }

    proptest! {
        #[test]
        fn exploitation_invariant_under_shift(
            means in proptest::collection::vec(-5.0f64..5.0, 2..6),
            shift in -100.0f64..100.0,
        ) {
            let zero = ExplorationSchedule::Constant { epsilon: 0.0 };
            let k = means.len();
            let a = state_with(&means.iter().copied().enumerate().collect::<Vec<_>>(), k);
            let b = state_with(
                &means.iter().map(|m| m + shift).enumerate().collect::<Vec<_>>(),
                k,
            );
            let mut rng = RngStream::new(0, 0);
            let sa = egreedy_select(&a, &zero, &mut rng).arm;
            let sb = egreedy_select(&b, &zero, &mut rng).arm;
            // shifting can only merge near-ties through rounding
            let best = means.iter().cloned().fold(f64::MIN, f64::max);
            if means.iter().filter(|&&m| best - m < 1e-9).count() == 1 {
                prop_assert_eq!(sa, sb);
            }
        }

        #[test]
        fn ucb_relabeling_equivariant(
            arms in proptest::collection::vec((-1.0f64..1.0, 1u64..50), 2..6),
            extra in 1u64..1000,
            sigma in 0.0f64..1.0,
            rot in 0usize..6,
        ) {
            let k = arms.len();
            let build = |perm: &dyn Fn(usize) -> usize| {
                let mut s = LearnerState::<f64>::new(k);
                for (i, &(m, n)) in arms.iter().enumerate() {
                    for _ in 0..n {
                        s.update(perm(i), m).unwrap();
                    }
                }
                s
            };
            let r = rot % k;
            let id = build(&|i| i);
            let rotated = build(&|i| (i + r) % k);
            let t = id.round() + extra;
            let idx: Vec<f64> = (0..k).map(|i| ucb_index(&id, t, i, sigma).unwrap()).collect();
            let best = idx.iter().cloned().fold(f64::MIN, f64::max);
            if idx.iter().filter(|&&v| best - v < 1e-12).count() == 1 {
                let a = ucb_select(&id, t, sigma).unwrap();
                let b = ucb_select(&rotated, t, sigma).unwrap();
                prop_assert_eq!((a + r) % k, b);
            }
        }
    }
}
