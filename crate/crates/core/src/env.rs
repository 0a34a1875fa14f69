//! The bandit world: arm means, noise scale, target arm and reward sampling.
//!
//! Arms are 0-based in this API. Documentation and all file formats use
//! 1-based arm numbers (`arm 1 .. arm K`), so arm `i` here is arm `i + 1`
//! there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::Scalar;

/// Deterministic random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// selector, so every pair gives an independent sequence and trial `i` of a
/// sweep can be regenerated in isolation.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// A K-armed Gaussian bandit with a designated target arm.
///
/// Means are stored in the order given; nothing assumes they are sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawInstance<S>",
    bound(deserialize = "S: Scalar + Deserialize<'de>")
)]
pub struct BanditInstance<S> {
    means: Vec<S>,
    sigma: S,
    target: usize,
}

#[derive(Deserialize)]
struct RawInstance<S> {
    means: Vec<S>,
    sigma: S,
    target: usize,
}

impl<S: Scalar> TryFrom<RawInstance<S>> for BanditInstance<S> {
    type Error = Error;

    fn try_from(raw: RawInstance<S>) -> Result<Self> {
        Self::new(raw.means, raw.sigma, raw.target)
    }
}

impl<S: Scalar> BanditInstance<S> {
    pub fn new(means: Vec<S>, sigma: S, target: usize) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::Config(format!(
                "a bandit needs at least 2 arms, got {}",
                means.len()
            )));
        }
        if target >= means.len() {
            return Err(Error::Config(format!(
                "target arm {} out of range 1..={}",
                target + 1,
                means.len()
            )));
        }
        if !(sigma >= S::zero()) || !sigma.is_finite() {
            return Err(Error::Config(format!(
                "noise scale must be finite and non-negative, got {sigma}"
            )));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("arm means must be finite".into()));
        }
        Ok(Self {
            means,
            sigma,
            target,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[S] {
        &self.means
    }

    pub fn mean(&self, arm: usize) -> S {
        self.means[arm]
    }

    pub fn sigma(&self) -> S {
        self.sigma
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn check_arm(&self, arm: usize) -> Result<()> {
        if arm < self.num_arms() {
            Ok(())
        } else {
            domain(format!(
                "arm index {arm} out of range for {} arms",
                self.num_arms()
            ))
        }
    }

    /// Draws `μ_arm + σ·z` with `z ~ N(0, 1)`. One normal draw is consumed
    /// even when `σ = 0`, in which case the mean is returned exactly.
    pub fn sample_reward(&self, arm: usize, rng: &mut RngStream) -> Result<S> {
        self.check_arm(arm)?;
        let z = rng.standard_normal();
        if self.sigma == S::zero() {
            return Ok(self.means[arm]);
        }
        Ok(self.means[arm] + self.sigma * S::lit(z))
    }

    /// Reward gaps relative to the target arm, plain and truncated by `margin`.
    pub fn compute_gaps(&self, margin: S) -> Result<GapTable<S>> {
        if !(margin >= S::zero()) {
            return domain(format!("gap margin must be non-negative, got {margin}"));
        }
        let base = self.means[self.target];
        let gaps = self
            .means
            .iter()
            .map(|&m| (m - base).positive_part())
            .collect();
        let truncated_gaps = self
            .means
            .iter()
            .map(|&m| (m - base + margin).positive_part())
            .collect();
        Ok(GapTable {
            gaps,
            truncated_gaps,
            margin,
        })
    }
}

/// `Δ_i = [μ_i − μ_target]₊` and `Δ^ε_i = [μ_i − μ_target + ε]₊`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable<S> {
    pub gaps: Vec<S>,
    pub truncated_gaps: Vec<S>,
    pub margin: S,
}

impl<S: Scalar> GapTable<S> {
    pub fn gap_sum(&self) -> S {
        self.gaps.iter().copied().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(means: &[f64], sigma: f64, target: usize) -> BanditInstance<f64> {
        BanditInstance::new(means.to_vec(), sigma, target).unwrap()
    }

    #[test]
    fn rejects_degenerate_instances() {
        assert!(BanditInstance::new(vec![1.0], 0.1, 0).is_err());
        assert!(BanditInstance::new(vec![1.0, 0.0], 0.1, 2).is_err());
        assert!(BanditInstance::new(vec![1.0, 0.0], -0.1, 1).is_err());
        assert!(BanditInstance::new(vec![f64::NAN, 0.0], 0.1, 1).is_err());
    }

    #[test]
    fn zero_noise_returns_mean() {
        let b = inst(&[1.0, 0.0], 0.0, 1);
        let mut rng = RngStream::new(1, 0);
        for _ in 0..10 {
            assert_eq!(b.sample_reward(0, &mut rng).unwrap(), 1.0);
        }
    }

    #[test]
    fn invalid_arm_is_domain_error() {
        let b = inst(&[1.0, 0.0], 0.0, 1);
        let mut rng = RngStream::new(1, 0);
        assert!(matches!(
            b.sample_reward(2, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn same_seed_and_stream_is_bit_identical() {
        let b = inst(&[0.1, 0.0], 0.1, 1);
        let draw = |seed, stream| {
            let mut rng = RngStream::new(seed, stream);
            (0..1000)
                .map(|i| b.sample_reward(i % 2, &mut rng).unwrap().to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42, 0), draw(42, 0));
        assert_ne!(draw(42, 0), draw(42, 1));
        assert_ne!(draw(42, 0), draw(43, 0));
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        let n = 200_000;
        let mut sxy = 0.0;
        for _ in 0..n {
            sxy += a.standard_normal() * b.standard_normal();
        }
        // correlation estimate has standard error 1/√n
        let corr = sxy / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    #[test]
    fn gaussian_moments_converge() {
        let b = inst(&[0.1, 0.0], 0.1, 1);
        let mut rng = RngStream::new(42, 0);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| b.sample_reward(1, &mut rng).unwrap())
            .collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        // se(mean) = σ/√n, se(var) = σ²·√(2/(n−1)) for Gaussian samples
        let se_mean = 0.1 / (n as f64).sqrt();
        let se_var = 0.01 * (2.0 / (n - 1) as f64).sqrt();
        assert!(m.abs() < 3.0 * se_mean, "mean {m}");
        assert!((v - 0.01).abs() < 3.0 * se_var, "var {v}");
    }

    #[test]
    fn gap_examples() {
        let g = inst(&[1.0, 0.0], 0.1, 1).compute_gaps(0.0).unwrap();
        assert_eq!(g.gaps, vec![1.0, 0.0]);

        let g = inst(&[0.1, 0.0], 0.1, 1).compute_gaps(0.05).unwrap();
        assert!((g.truncated_gaps[0] - 0.15).abs() < 1e-15);
        assert!((g.truncated_gaps[1] - 0.05).abs() < 1e-15);

        let g = inst(&[0.0, 1.0], 0.1, 1).compute_gaps(0.0).unwrap();
        assert_eq!(g.gaps, vec![0.0, 0.0]);

        assert!(inst(&[0.0, 1.0], 0.1, 1).compute_gaps(-0.1).is_err());
    }

    #[test]
    fn truncated_gaps_dominate_plain_gaps() {
        let b = inst(&[0.3, -0.2, 0.0, 0.7], 0.1, 2);
        for margin in [0.0, 0.01, 0.5] {
            let g = b.compute_gaps(margin).unwrap();
            assert_eq!(g.gaps[2], 0.0);
            for (d, de) in g.gaps.iter().zip(&g.truncated_gaps) {
                assert!(de >= d);
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let b = BanditInstance::<f32>::new(vec![0.5, 0.0], 0.0, 1).unwrap();
        let mut rng = RngStream::new(3, 0);
        assert_eq!(b.sample_reward(0, &mut rng).unwrap(), 0.5f32);
    }
}
