//! Mean reward functions and the reward noise model.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::hard::HardInstance;

/// Two-action reward pairs used by the synthetic experiments, and the
/// lower-bound construction.
///
/// In more than one dimension the scalar forms are applied to the coordinate
/// sum `s = x_1 + ... + x_d`; the Lipschitz constant becomes `sqrt(d)`.
#[derive(Debug, Clone)]
pub enum RewardKind {
    /// `eta_0(x) = s`, `eta_1(x) = -s`.
    LinearPair,
    /// `eta_0(x) = sin s`, `eta_1(x) = cos s`.
    TrigPair,
    /// `eta_0` is `+-h` on the margin balls and 0 elsewhere; `eta_1 = 0`.
    HardInstance(Arc<HardInstance>),
}

/// Mean rewards plus Gaussian noise of standard deviation `sigma`.
#[derive(Debug, Clone)]
pub struct RewardFamily {
    pub kind: RewardKind,
    pub sigma: f64,
}

impl RewardFamily {
    pub fn new(kind: RewardKind, sigma: f64) -> Result<Self, String> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(format!("noise sigma must be finite and >= 0, got {sigma}"));
        }
        Ok(Self { kind, sigma })
    }

    pub fn num_actions(&self) -> usize {
        2
    }

    pub fn mean_reward(&self, action: usize, x: &[f64]) -> f64 {
        debug_assert!(action < self.num_actions());
        let s: f64 = x.iter().sum();
        match (&self.kind, action) {
            (RewardKind::LinearPair, 0) => s,
            (RewardKind::LinearPair, _) => -s,
            (RewardKind::TrigPair, 0) => s.sin(),
            (RewardKind::TrigPair, _) => s.cos(),
            (RewardKind::HardInstance(h), 0) => h.eta(x),
            (RewardKind::HardInstance(_), _) => 0.0,
        }
    }

    pub fn means(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_actions())
            .map(|a| self.mean_reward(a, x))
            .collect()
    }

    pub fn optimal_reward(&self, x: &[f64]) -> f64 {
        self.means(x).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `eta*(x) - eta_a(x)`.
    pub fn gap(&self, action: usize, x: &[f64]) -> f64 {
        self.optimal_reward(x) - self.mean_reward(action, x)
    }

    pub fn sample_reward<R: Rng + ?Sized>(&self, action: usize, x: &[f64], rng: &mut R) -> f64 {
        add_noise(self.mean_reward(action, x), self.sigma, rng)
    }

    /// Lipschitz constant of every mean function on `R^dim`, when one exists.
    /// The lower-bound construction is discontinuous at ball boundaries.
    pub fn lipschitz(&self, dim: usize) -> Option<f64> {
        match self.kind {
            RewardKind::LinearPair | RewardKind::TrigPair => Some((dim as f64).sqrt()),
            RewardKind::HardInstance(_) => None,
        }
    }

    /// Bound on `eta*(x) - min_a eta_a(x)` over all contexts, when finite.
    pub fn max_gap(&self) -> Option<f64> {
        match &self.kind {
            RewardKind::LinearPair => None,
            RewardKind::TrigPair => Some(2f64.sqrt()),
            RewardKind::HardInstance(h) => Some(h.radius),
        }
    }
}

/// `mean + sigma * Z` with `Z` standard normal; exactly `mean` when `sigma = 0`.
pub fn add_noise<R: Rng + ?Sized>(mean: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return mean;
    }
    let z: f64 = rng.sample(StandardNormal);
    mean + sigma * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_pair_values() {
        let f = RewardFamily::new(RewardKind::LinearPair, 0.5).unwrap();
        assert_eq!(f.mean_reward(0, &[0.3]), 0.3);
        assert_eq!(f.mean_reward(1, &[0.3]), -0.3);
        assert_eq!(f.optimal_reward(&[0.3]), 0.3);
        assert_eq!(f.gap(1, &[0.3]), 0.6);
        assert_eq!(f.mean_reward(0, &[0.3, 0.2]), 0.5);
    }

    #[test]
    fn trig_pair_values() {
        let f = RewardFamily::new(RewardKind::TrigPair, 0.5).unwrap();
        assert_eq!(f.mean_reward(0, &[0.0]), 0.0);
        assert_eq!(f.mean_reward(1, &[0.0]), 1.0);
        assert_eq!(f.optimal_reward(&[0.0]), 1.0);
    }

    #[test]
    fn zero_noise_is_exact() {
        let f = RewardFamily::new(RewardKind::TrigPair, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(f.sample_reward(0, &[1.3], &mut rng), 1.3f64.sin());
    }

    #[test]
    fn noise_is_centered() {
        let f = RewardFamily::new(RewardKind::LinearPair, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let m = (0..n).map(|_| f.sample_reward(1, &[0.4], &mut rng)).sum::<f64>() / n as f64;
        assert!((m + 0.4).abs() < 3.0 * 0.5 / (n as f64).sqrt(), "mean {m}");
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(RewardFamily::new(RewardKind::LinearPair, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn gaps_nonnegative_and_trig_bounded(x in -1e6f64..1e6, y in -1e3f64..1e3) {
            for kind in [RewardKind::LinearPair, RewardKind::TrigPair] {
                let f = RewardFamily::new(kind, 0.0).unwrap();
                for a in 0..2 {
                    prop_assert!(f.gap(a, &[x]) >= 0.0);
                    prop_assert!(f.gap(a, &[x, y]) >= 0.0);
                }
            }
            let t = RewardFamily::new(RewardKind::TrigPair, 0.0).unwrap();
            for a in 0..2 {
                prop_assert!(t.gap(a, &[x]) <= t.max_gap().unwrap() + 1e-12);
                prop_assert!(t.gap(a, &[x]) <= 2.0);
            }
        }
    }
}
