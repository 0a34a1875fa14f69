//! Closed-form guarantees for the adaptive attacks, evaluated numerically so
//! they can be overlaid on simulated curves.

use serde::{Deserialize, Serialize};

use crate::attackers::beta_continuous;
use crate::env::GapTable;
use crate::error::{domain, Result};
use crate::learners::ExplorationSchedule;
use crate::Scalar;

/// High-probability pull counts for ε-greedy under the adaptive attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgreedyPullBounds {
    /// `S = Σ_{t≤T} ε_t`.
    pub total_exploration: f64,
    /// Upper bound `Ñ(T)` on the pulls of any non-target arm.
    pub ntilde: f64,
    /// Lower bound `Ñ_K(T)` on the target pulls.
    pub ntilde_target: f64,
    /// Whether `S ≥ K/(e−2)·ln(K/δ)`, the condition the bounds assume.
    pub precondition_ok: bool,
}

/// Smallest exploration mass for which the ε-greedy pull bounds apply.
pub fn egreedy_precondition_threshold(num_arms: usize, delta: f64) -> f64 {
    let k = num_arms as f64;
    k / (std::f64::consts::E - 2.0) * (k / delta).ln()
}

fn pull_bounds_from_mass(
    total: f64,
    num_arms: usize,
    delta: f64,
    horizon: u64,
) -> EgreedyPullBounds {
    let k = num_arms as f64;
    let log_term = 3.0 * (k / delta).ln();
    EgreedyPullBounds {
        total_exploration: total,
        ntilde: total / k + (log_term * total / k).sqrt(),
        ntilde_target: horizon as f64 - total - (log_term * total).sqrt(),
        precondition_ok: total >= egreedy_precondition_threshold(num_arms, delta),
    }
}

/// `Ñ(T) = S/K + √(3·ln(K/δ)·S/K)`, `Ñ_K(T) = T − S − √(3·ln(K/δ)·S)`.
pub fn egreedy_pull_bounds(
    schedule: &ExplorationSchedule,
    num_arms: usize,
    delta: f64,
    horizon: u64,
) -> Result<EgreedyPullBounds> {
    Ok(egreedy_pull_bounds_curve(schedule, num_arms, delta, &[horizon])?[0])
}

/// [`egreedy_pull_bounds`] at each horizon in the ascending list `horizons`,
/// accumulating `S` once.
pub fn egreedy_pull_bounds_curve(
    schedule: &ExplorationSchedule,
    num_arms: usize,
    delta: f64,
    horizons: &[u64],
) -> Result<Vec<EgreedyPullBounds>> {
    if horizons.first().is_some_and(|&t| t == 0) {
        return domain("pull bounds need T ≥ 1");
    }
    if horizons.windows(2).any(|w| w[0] > w[1]) {
        return domain("horizons must be ascending");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("δ must lie in (0, 1), got {delta}"));
    }
    schedule.validate()?;
    let mut acc = crate::stats::CompensatedSum::<f64>::new();
    let mut t = 0u64;
    let mut out = Vec::with_capacity(horizons.len());
    for &h in horizons {
        while t < h {
            t += 1;
            acc.add(schedule.epsilon_at(num_arms, t)?);
        }
        out.push(pull_bounds_from_mass(acc.value(), num_arms, delta, h));
    }
    Ok(out)
}

/// Cumulative cost bound for the adaptive ε-greedy attack:
/// `(Σ_i Δ_i)·Ñ + (K−1)·(Ñ·β(Ñ) + 3·Ñ·β(Ñ_K))`, with β at real arguments.
///
/// Fails with a domain error when `Ñ_K ≤ 0` or `Ñ = 0`, where the bound is
/// undefined.
pub fn egreedy_cost_bound<S: Scalar>(
    gaps: &GapTable<S>,
    pulls: &EgreedyPullBounds,
    delta: S,
    sigma: S,
) -> Result<S> {
    let k = gaps.gaps.len();
    let n = S::lit(pulls.ntilde);
    let nk = S::lit(pulls.ntilde_target);
    if !(nk > S::zero()) {
        return domain(format!(
            "target pull bound Ñ_K = {} is not positive",
            pulls.ntilde_target
        ));
    }
    if !(n > S::zero()) {
        return domain("non-target pull bound Ñ is zero");
    }
    let noise = n * beta_continuous(n, k, sigma, delta)?
        + S::lit(3.0) * n * beta_continuous(nk, k, sigma, delta)?;
    let value = gaps.gap_sum() * n + S::from_usize(k - 1).unwrap() * noise;
    if value.is_nan() {
        return domain("cost bound is not finite at this horizon");
    }
    Ok(value)
}

/// Guarantees for the adaptive UCB attack at horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcbBounds<S> {
    /// `2 + (9σ²/Δ₀²)·ln T`, per non-target arm.
    pub per_arm_pulls: S,
    /// `(K−1)` times the per-arm bound.
    pub nontarget_pulls: S,
    /// `T − (K−1)·(2 + (9σ²/Δ₀²)·ln T)`.
    pub target_pulls: S,
    pub cost: S,
}

pub fn ucb_bounds<S: Scalar>(
    gaps: &GapTable<S>,
    target: usize,
    delta: S,
    sigma: S,
    delta0: S,
    horizon: u64,
) -> Result<UcbBounds<S>> {
    let k = gaps.gaps.len();
    if !(delta0 > S::zero()) {
        return domain(format!("UCB bounds diverge for Δ₀ = {delta0}"));
    }
    if horizon < 2 * k as u64 {
        return domain(format!("UCB bounds need T ≥ 2K = {}", 2 * k));
    }
    if !(delta > S::zero() && delta <= S::lit(0.5)) {
        return domain(format!("UCB bounds need 0 < δ ≤ 1/2, got {delta}"));
    }
    let per_arm =
        S::lit(2.0) + S::lit(9.0) * sigma * sigma / (delta0 * delta0) * S::from_count(horizon).ln();
    let others = S::from_usize(k - 1).unwrap();
    let gap_sum: S = (0..k)
        .filter(|&i| i != target)
        .map(|i| gaps.gaps[i] + delta0)
        .sum();
    let pi2 = S::PI() * S::PI();
    let log_term =
        (pi2 * S::from_usize(k).unwrap() * per_arm * per_arm / (S::lit(3.0) * delta)).ln();
    let cost = per_arm * gap_sum + sigma * others * (S::lit(32.0) * per_arm * log_term).sqrt();
    Ok(UcbBounds {
        per_arm_pulls: per_arm,
        nontarget_pulls: others * per_arm,
        target_pulls: S::from_count(horizon) - others * per_arm,
        cost,
    })
}

/// Oracle-attack margin `ε = √(C·ln T)` that balances the two cost terms
/// against a near-optimal learner. `C` is learner specific and user supplied.
pub fn best_oracle_margin(c: f64, horizon: u64) -> Result<f64> {
    if !(c > 0.0) || horizon < 2 {
        return domain("best oracle margin needs C > 0 and T ≥ 2");
    }
    Ok((c * (horizon as f64).ln()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::BanditInstance;

    fn gaps(means: &[f64]) -> GapTable<f64> {
        BanditInstance::new(means.to_vec(), 0.1, means.len() - 1)
            .unwrap()
            .compute_gaps(0.0)
            .unwrap()
    }

    /// Direct harmonic sum in the most naive form, for comparison.
    fn harmonic(n: u64) -> f64 {
        (1..=n).map(|t| 1.0 / t as f64).sum()
    }

    #[test]
    fn degenerate_schedule() {
        let b = egreedy_pull_bounds(
            &ExplorationSchedule::Constant { epsilon: 0.0 },
            2,
            0.025,
            500,
        )
        .unwrap();
        assert_eq!(b.ntilde, 0.0);
        assert_eq!(b.ntilde_target, 500.0);
        assert!(!b.precondition_ok);
    }

    #[test]
    fn inverse_time_schedule_at_ten_thousand() {
        let b = egreedy_pull_bounds(&ExplorationSchedule::InverseTime, 2, 0.025, 10_000).unwrap();
        // 40-digit reference values
        assert!((b.total_exploration - 9.787_606_036_044_382).abs() < 1e-12);
        assert!((b.total_exploration - harmonic(10_000)).abs() < 1e-11);
        assert!(
            (b.ntilde - 12.914_671_144_943_49).abs() < 1e-10,
            "{}",
            b.ntilde
        );
        assert!((b.ntilde_target - 9_978.869_173_476_857).abs() < 1e-8);
        assert!(!b.precondition_ok);
    }

    #[test]
    fn precondition_boundary() {
        let thr = egreedy_precondition_threshold(2, 0.025);
        assert!((thr - 12.201_413_041_660_247).abs() < 1e-12);
        // scan for the first horizon meeting the condition
        let mut s = 0.0;
        let mut first = 0;
        for t in 1..200_000u64 {
            s += 1.0 / t as f64;
            if s >= thr {
                first = t;
                break;
            }
        }
        assert_eq!(first, 111_770);
        let sched = ExplorationSchedule::InverseTime;
        let curve = egreedy_pull_bounds_curve(&sched, 2, 0.025, &[first - 1, first]).unwrap();
        assert!(!curve[0].precondition_ok);
        assert!(curve[1].precondition_ok);
    }

    #[test]
    fn curve_matches_pointwise() {
        let sched = ExplorationSchedule::Decaying { c: 0.7 };
        let hs = [3, 10, 100, 1000];
        let curve = egreedy_pull_bounds_curve(&sched, 3, 0.05, &hs).unwrap();
        for (h, c) in hs.iter().zip(&curve) {
            assert_eq!(*c, egreedy_pull_bounds(&sched, 3, 0.05, *h).unwrap());
        }
        assert!(egreedy_pull_bounds(&sched, 3, 0.05, 0).is_err());
    }

    #[test]
    fn egreedy_cost_bound_values() {
        let pulls =
            egreedy_pull_bounds(&ExplorationSchedule::InverseTime, 2, 0.025, 10_000).unwrap();
        let b = egreedy_cost_bound(&gaps(&[0.1, 0.0]), &pulls, 0.025, 0.1).unwrap();
        assert!((b - 3.221_759_725_646_712).abs() < 1e-9, "{b}");

        // first term is linear in the gap sum
        let zero_noise = |m: f64| egreedy_cost_bound(&gaps(&[m, 0.0]), &pulls, 0.025, 0.0).unwrap();
        assert!((zero_noise(0.4) - 2.0 * zero_noise(0.2)).abs() < 1e-12);
        assert_eq!(
            egreedy_cost_bound(&gaps(&[0.0, 0.0]), &pulls, 0.025, 0.0).unwrap(),
            0.0
        );
        let tiny = egreedy_cost_bound(&gaps(&[0.0, 0.0]), &pulls, 0.025, 1e-9).unwrap();
        assert!(tiny < 1e-6);

        let bad = EgreedyPullBounds {
            ntilde_target: -1.0,
            ..pulls
        };
        assert!(egreedy_cost_bound(&gaps(&[0.1, 0.0]), &bad, 0.025, 0.1).is_err());
    }

    #[test]
    fn ucb_bound_values() {
        let g = gaps(&[0.1, 0.0]);
        let b = ucb_bounds(&g, 1, 0.05, 0.1, 0.1, 10_000_000).unwrap();
        assert!((b.per_arm_pulls - 147.062_860_858_624_88).abs() < 1e-9);
        assert_eq!(
            ucb_bounds(&g, 1, 0.05, 0.0, 0.1, 100)
                .unwrap()
                .per_arm_pulls,
            2.0
        );
        let a = ucb_bounds(&g, 1, 0.05, 0.1, 0.1, 1000)
            .unwrap()
            .per_arm_pulls
            - 2.0;
        let q = ucb_bounds(&g, 1, 0.05, 0.1, 0.4, 1000)
            .unwrap()
            .per_arm_pulls
            - 2.0;
        assert!((a / q - 16.0).abs() < 1e-9);
        assert!(ucb_bounds(&g, 1, 0.05, 0.1, 0.0, 1000).is_err());
        assert!(ucb_bounds(&g, 1, 0.05, 0.1, 0.1, 3).is_err());
        assert!(ucb_bounds(&g, 1, 0.6, 0.1, 0.1, 100).is_err());
        assert!(b.cost.is_finite() && b.cost > 0.0);
    }

    #[test]
    fn ucb_cost_hand_evaluation() {
        let g = gaps(&[0.3, 0.0]);
        let (sigma, d0, delta, t) = (0.2f64, 0.1f64, 0.05f64, 5000u64);
        let m = 2.0 + 9.0 * sigma * sigma / (d0 * d0) * (t as f64).ln();
        let expect = m * (0.3 + d0)
            + sigma
                * (32.0 * m * (std::f64::consts::PI.powi(2) * 2.0 * m * m / (3.0 * delta)).ln())
                    .sqrt();
        let b = ucb_bounds(&g, 1, delta, sigma, d0, t).unwrap();
        assert!((b.cost - expect).abs() < 1e-9 * expect);
        assert!((b.target_pulls - (t as f64 - m)).abs() < 1e-9);
    }

    #[test]
    fn evaluators_are_bitwise_repeatable() {
        let g = gaps(&[0.5, 0.2, 0.0]);
        let a = ucb_bounds(&g, 2, 0.05, 0.3, 0.2, 123_456).unwrap();
        let b = ucb_bounds(&g, 2, 0.05, 0.3, 0.2, 123_456).unwrap();
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    }

    #[test]
    fn best_margin() {
        assert!(
            (best_oracle_margin(2.0, 1000).unwrap() - (2.0f64 * 1000f64.ln()).sqrt()).abs() < 1e-15
        );
        assert!(best_oracle_margin(0.0, 1000).is_err());
    }
}
