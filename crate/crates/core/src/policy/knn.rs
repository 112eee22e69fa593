//! Nearest-neighbor UCB policies with a fixed or an adaptive neighbor count.
//!
//! Both policies estimate the reward of action `a` at context `x` from the
//! rewards of the nearest previous samples taken with `a`, then add two
//! widening terms: a noise bonus `b` and a bias bound `L * rho`, where `rho`
//! is the distance to the farthest neighbor used.
//!
//! * Fixed k: the estimate needs `k` samples; before that the UCB is
//!   [`UcbValue::Infinite`], which makes the first `k * |A|` steps pure
//!   exploration. The bonus is
//!   `b = sqrt(2 sigma^2 / k * ln(d * T^(2d+2) * |A|))`.
//! * Adaptive k: `k` is the largest `j` with
//!   `L * rho_j(x) <= sqrt(ln T / j)`, so dense neighborhoods average more
//!   samples. If even the nearest sample is farther than `sqrt(ln T) / L`
//!   the UCB is infinite. The bonus uses `T^(2d+3)` in the log factor.

use crate::knn_store::{ActionStore, NeighborEntry};

use super::{choose_action, Policy, PolicyError, Protocol, UcbValue};

/// Inputs shared by both nearest-neighbor policies.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    /// Horizon `T`; the log factors and the adaptive threshold use it.
    pub horizon: usize,
    pub num_actions: usize,
    pub dim: usize,
    /// Subgaussian noise parameter.
    pub sigma: f64,
    /// Lipschitz constant of the mean reward functions.
    pub lipschitz: f64,
    /// Multiplier on the noise bonus. 1.0 reproduces the theoretical bonus.
    pub conf_scale: f64,
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let mut errs = Vec::new();
        if self.horizon < 1 {
            errs.push("horizon must be >= 1");
        }
        if self.num_actions < 1 {
            errs.push("num_actions must be >= 1");
        }
        if self.dim < 1 {
            errs.push("dim must be >= 1");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            errs.push("sigma must be finite and >= 0");
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            errs.push("lipschitz must be finite and > 0");
        }
        if !(self.conf_scale > 0.0 && self.conf_scale.is_finite()) {
            errs.push("conf_scale must be finite and > 0");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(PolicyError::InvalidConfig(errs.join("; ")))
        }
    }

    /// `ln(d * T^p * |A|)`, evaluated without forming `T^p`.
    fn log_factor(&self, power: f64) -> f64 {
        (self.dim as f64).ln() + power * (self.horizon as f64).ln() + (self.num_actions as f64).ln()
    }

    fn bonus(&self, k: usize, power: f64) -> f64 {
        let log = self.log_factor(power).max(0.0);
        self.conf_scale * (2.0 * self.sigma * self.sigma / k as f64 * log).sqrt()
    }
}

// Guards `ceil` against powers that land a hair above an integer.
fn ceil_power(base: f64, exponent: f64) -> usize {
    let v = base.powf(exponent);
    ((v * (1.0 - 1e-12)).ceil() as usize).max(1)
}

/// `ceil(T^(2/(d+2)))`, the neighbor count matched to the dimension.
pub fn default_fixed_k(horizon: usize, dim: usize) -> usize {
    ceil_power(horizon as f64, 2.0 / (dim as f64 + 2.0))
}

/// `ceil(T^(2/(alpha+3)))`, the neighbor count for the regime `d <= alpha + 1`
/// when the margin exponent is known.
pub fn margin_fixed_k(horizon: usize, alpha: f64) -> usize {
    ceil_power(horizon as f64, 2.0 / (alpha + 3.0))
}

/// Noise bonus of the fixed-k policy.
pub fn fixed_b(cfg: &PolicyConfig, k: usize) -> f64 {
    let d = cfg.dim as f64;
    cfg.bonus(k, 2.0 * d + 2.0)
}

/// Noise bonus of the adaptive policy for a query that averages `k` neighbors.
pub fn adaptive_b(cfg: &PolicyConfig, k: usize) -> f64 {
    let d = cfg.dim as f64;
    cfg.bonus(k, 2.0 * d + 3.0)
}

fn mean_reward(neighbors: &[NeighborEntry]) -> f64 {
    neighbors.iter().map(|e| e.reward).sum::<f64>() / neighbors.len() as f64
}

/// UCB of the fixed-k policy for one action's samples.
pub fn fixed_ucb(
    cfg: &PolicyConfig,
    k: usize,
    store: &ActionStore,
    x: &[f64],
) -> Result<UcbValue, PolicyError> {
    if store.len() < k {
        return Ok(UcbValue::Infinite);
    }
    let nn = store.knn(x, k)?;
    let rho = nn[k - 1].distance;
    Ok(UcbValue::Finite(
        mean_reward(&nn) + fixed_b(cfg, k) + cfg.lipschitz * rho,
    ))
}

/// Neighbor count chosen by the adaptive rule, with the matching neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveChoice {
    pub k: usize,
    /// Distance to the k-th neighbor.
    pub radius: f64,
    pub neighbors: Vec<NeighborEntry>,
}

/// Largest `j` with `L * rho_j(x) <= sqrt(ln T / j)`, or `None` when the store
/// is empty or the nearest sample already violates the bound.
///
/// The distances are nondecreasing and the threshold is decreasing in `j`, so
/// the feasible `j` form a prefix and a single pass finds its end.
pub fn adaptive_select_k(
    cfg: &PolicyConfig,
    store: &ActionStore,
    x: &[f64],
) -> Result<Option<AdaptiveChoice>, PolicyError> {
    if store.is_empty() {
        return Ok(None);
    }
    let ln_t = (cfg.horizon as f64).ln();
    let sorted = store.knn(x, store.len())?;
    let k = sorted
        .iter()
        .enumerate()
        .take_while(|(i, e)| cfg.lipschitz * e.distance <= (ln_t / (i + 1) as f64).sqrt())
        .count();
    if k == 0 {
        return Ok(None);
    }
    let mut neighbors = sorted;
    neighbors.truncate(k);
    Ok(Some(AdaptiveChoice {
        k,
        radius: neighbors[k - 1].distance,
        neighbors,
    }))
}

/// UCB of the adaptive policy for one action's samples.
pub fn adaptive_ucb(
    cfg: &PolicyConfig,
    store: &ActionStore,
    x: &[f64],
) -> Result<UcbValue, PolicyError> {
    Ok(match adaptive_select_k(cfg, store, x)? {
        None => UcbValue::Infinite,
        Some(c) => UcbValue::Finite(
            mean_reward(&c.neighbors) + adaptive_b(cfg, c.k) + cfg.lipschitz * c.radius,
        ),
    })
}

/// How many neighbors the policy averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(usize),
    Adaptive,
}

/// Nearest-neighbor UCB policy.
#[derive(Debug, Clone)]
pub struct KnnUcb {
    cfg: PolicyConfig,
    bandwidth: Bandwidth,
    stores: Vec<ActionStore>,
    step: usize,
    protocol: Protocol,
}

impl KnnUcb {
    pub fn new(cfg: PolicyConfig, bandwidth: Bandwidth) -> Result<Self, PolicyError> {
        cfg.validate()?;
        if bandwidth == Bandwidth::Fixed(0) {
            return Err(PolicyError::InvalidConfig("k must be >= 1".into()));
        }
        let stores = (0..cfg.num_actions)
            .map(|_| ActionStore::new(cfg.dim))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            cfg,
            bandwidth,
            stores,
            step: 1,
            protocol: Protocol::default(),
        })
    }

    pub fn fixed(cfg: PolicyConfig, k: usize) -> Result<Self, PolicyError> {
        Self::new(cfg, Bandwidth::Fixed(k))
    }

    pub fn adaptive(cfg: PolicyConfig) -> Result<Self, PolicyError> {
        Self::new(cfg, Bandwidth::Adaptive)
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.bandwidth
    }

    pub fn store(&self, action: usize) -> &ActionStore {
        &self.stores[action]
    }

    /// Number of times `action` has been taken so far.
    pub fn pulls(&self, action: usize) -> usize {
        self.stores[action].len()
    }

    /// Current step index, starting at 1.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn ucb(&self, action: usize, x: &[f64]) -> Result<UcbValue, PolicyError> {
        let store = &self.stores[action];
        match self.bandwidth {
            Bandwidth::Fixed(k) => fixed_ucb(&self.cfg, k, store, x),
            Bandwidth::Adaptive => adaptive_ucb(&self.cfg, store, x),
        }
    }

    /// UCBs of every action at `x`.
    pub fn ucbs(&self, x: &[f64]) -> Result<Vec<UcbValue>, PolicyError> {
        (0..self.cfg.num_actions).map(|a| self.ucb(a, x)).collect()
    }
}

impl Policy for KnnUcb {
    fn name(&self) -> &'static str {
        match self.bandwidth {
            Bandwidth::Fixed(_) => "fixed_knn",
            Bandwidth::Adaptive => "adaptive_knn",
        }
    }

    fn num_actions(&self) -> usize {
        self.cfg.num_actions
    }

    fn act(&mut self, x: &[f64]) -> Result<usize, PolicyError> {
        self.protocol.begin()?;
        if x.len() != self.cfg.dim {
            return Err(crate::knn_store::KnnError::DimensionMismatch {
                expected: self.cfg.dim,
                found: x.len(),
            }
            .into());
        }
        let a = choose_action(&self.ucbs(x)?)?;
        self.protocol.record(x, a);
        Ok(a)
    }

    fn observe(&mut self, x: &[f64], action: usize, reward: f64) -> Result<(), PolicyError> {
        self.protocol.finish(x, action)?;
        self.stores[action].insert(x, reward)?;
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg(horizon: usize, dim: usize, sigma: f64, lipschitz: f64) -> PolicyConfig {
        PolicyConfig {
            horizon,
            num_actions: 2,
            dim,
            sigma,
            lipschitz,
            conf_scale: 1.0,
        }
    }

    fn store_1d(points: &[(f64, f64)]) -> ActionStore {
        let mut s = ActionStore::new(1).unwrap();
        for &(p, y) in points {
            s.insert(&[p], y).unwrap();
        }
        s
    }

    #[test]
    fn fixed_b_zero_noise() {
        assert_eq!(fixed_b(&cfg(1000, 1, 0.0, 1.0), 100), 0.0);
    }

    #[test]
    fn fixed_b_reference_value() {
        // sqrt(0.02 * ln(2e12)), ln(2e12) = 28.324168296488...
        let b = fixed_b(&cfg(1000, 1, 1.0, 1.0), 100);
        assert_relative_eq!(b, 0.752650893, epsilon = 1e-8);
    }

    #[test]
    fn fixed_b_scales_as_inverse_sqrt_k() {
        let c = cfg(1000, 1, 1.0, 1.0);
        assert_relative_eq!(fixed_b(&c, 400) / fixed_b(&c, 100), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn fixed_ucb_infinite_until_k_samples() {
        let c = cfg(10, 1, 1.0, 1.0);
        let empty = ActionStore::new(1).unwrap();
        assert_eq!(fixed_ucb(&c, 1, &empty, &[0.0]).unwrap(), UcbValue::Infinite);
        let one = store_1d(&[(0.0, 1.0)]);
        assert_eq!(fixed_ucb(&c, 2, &one, &[0.0]).unwrap(), UcbValue::Infinite);
    }

    #[test]
    fn fixed_ucb_noiseless_exact_sample() {
        let c = cfg(10, 1, 0.0, 1.0);
        let s = store_1d(&[(0.4, 0.0)]);
        assert_eq!(fixed_ucb(&c, 1, &s, &[0.4]).unwrap(), UcbValue::Finite(0.0));
    }

    #[test]
    fn fixed_ucb_reference_value() {
        // b = sqrt((2/2) * ln(1 * 10^4 * 2)) = sqrt(ln 20000) = 3.1469807...
        let c = cfg(10, 1, 1.0, 1.0);
        let s = store_1d(&[(0.1, 1.0), (0.3, 0.0), (5.0, 9.0)]);
        let v = fixed_ucb(&c, 2, &s, &[0.0]).unwrap().finite().unwrap();
        assert_relative_eq!(v, 0.5 + 3.146_980_704_188_72 + 0.3, epsilon = 1e-12);
    }

    #[test]
    fn adaptive_b_reference_values() {
        assert_eq!(adaptive_b(&cfg(10, 1, 0.0, 1.0), 3), 0.0);
        // sqrt(2 * ln(2e5)), ln(2e5) = 12.206072645530174
        let c = cfg(10, 1, 1.0, 1.0);
        assert_relative_eq!(adaptive_b(&c, 1), (2.0 * 12.206072645530174f64).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(adaptive_b(&c, 1), 4.940864832, epsilon = 1e-9);
        assert_relative_eq!(adaptive_b(&c, 9) / adaptive_b(&c, 1), 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn adaptive_k_examples() {
        let c = cfg(3, 1, 1.0, 1.0);
        assert_eq!(adaptive_select_k(&c, &ActionStore::new(1).unwrap(), &[0.0]).unwrap(), None);
        // threshold sqrt(ln 3 / j): 1.0482, 0.7411, 0.6052
        let s = store_1d(&[(0.5, 1.0), (0.9, 0.0), (2.0, 0.0)]);
        let ch = adaptive_select_k(&c, &s, &[0.0]).unwrap().unwrap();
        assert_eq!(ch.k, 1);
        assert_eq!(ch.radius, 0.5);
        let s = store_1d(&[(0.1, 0.0), (0.2, 0.0), (0.3, 0.0)]);
        assert_eq!(adaptive_select_k(&c, &s, &[0.0]).unwrap().unwrap().k, 3);
        let far = store_1d(&[(1.2, 0.0)]);
        assert_eq!(adaptive_select_k(&c, &far, &[0.0]).unwrap(), None);
    }

    #[test]
    fn adaptive_ucb_examples() {
        let s = store_1d(&[(1.0, 2.0)]);
        let c = cfg(2, 1, 0.0, 1.0);
        assert_eq!(adaptive_ucb(&c, &s, &[1.0]).unwrap(), UcbValue::Finite(2.0));

        // b = sqrt(2 * ln(2 * 3^5)) = sqrt(2 * 6.18620862...) = 3.51744...
        let c = cfg(3, 1, 1.0, 1.0);
        let s = store_1d(&[(0.5, 1.0), (0.9, 7.0), (2.0, 7.0)]);
        let v = adaptive_ucb(&c, &s, &[0.0]).unwrap().finite().unwrap();
        let b = (2.0 * (2.0f64 * 243.0).ln()).sqrt();
        assert_relative_eq!(v, 1.0 + b + 0.5, epsilon = 1e-12);
        assert_relative_eq!(b, 3.5174, epsilon = 1e-4);

        let far = store_1d(&[(3.0, 1.0)]);
        assert_eq!(adaptive_ucb(&c, &far, &[0.0]).unwrap(), UcbValue::Infinite);
    }

    #[test]
    fn default_k_rules() {
        assert_eq!(default_fixed_k(1000, 1), 100);
        assert_eq!(default_fixed_k(1000, 2), 32);
        assert_eq!(margin_fixed_k(1000, 1.0), 32);
        assert_eq!(default_fixed_k(1, 1), 1);
    }

    #[test]
    fn forced_exploration_order() {
        let mut p = KnnUcb::fixed(cfg(100, 1, 0.5, 1.0), 2).unwrap();
        let xs = [0.3, -0.2, 0.9, -0.7];
        let mut acts = Vec::new();
        for &x in &xs {
            let a = p.act(&[x]).unwrap();
            p.observe(&[x], a, 0.0).unwrap();
            acts.push(a);
        }
        assert_eq!(acts, vec![0, 0, 1, 1]);
        assert_eq!(p.pulls(0), 2);
        assert_eq!(p.step(), 5);
    }

    #[test]
    fn observe_requires_matching_context() {
        let mut p = KnnUcb::adaptive(cfg(100, 1, 0.5, 1.0)).unwrap();
        let a = p.act(&[0.1]).unwrap();
        assert!(matches!(p.observe(&[0.2], a, 0.0), Err(PolicyError::Protocol(_))));
        let mut p = KnnUcb::adaptive(cfg(100, 1, 0.5, 1.0)).unwrap();
        assert!(p.observe(&[0.2], 0, 0.0).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(KnnUcb::fixed(cfg(100, 1, 0.5, 1.0), 0).is_err());
        assert!(KnnUcb::adaptive(cfg(100, 1, -0.5, 1.0)).is_err());
        assert!(KnnUcb::adaptive(cfg(100, 1, 0.5, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn bonuses_monotone(k in 1usize..500, sigma in 0.0f64..3.0, dsig in 0.0f64..1.0) {
            let c = cfg(1000, 2, sigma, 1.0);
            let c2 = cfg(1000, 2, sigma + dsig, 1.0);
            prop_assert!(fixed_b(&c, k + 1) <= fixed_b(&c, k));
            prop_assert!(adaptive_b(&c, k + 1) <= adaptive_b(&c, k));
            prop_assert!(fixed_b(&c2, k) >= fixed_b(&c, k));
            prop_assert!(adaptive_b(&c2, k) >= adaptive_b(&c, k));
        }

        #[test]
        fn adaptive_k_is_maximal(
            pts in prop::collection::vec(-2.0f64..2.0, 1..80),
            q in -2.0f64..2.0,
            horizon in 2usize..5000,
            lip in 0.1f64..5.0,
        ) {
            let c = cfg(horizon, 1, 1.0, lip);
            let mut s = ActionStore::new(1).unwrap();
            for &p in &pts { s.insert(&[p], 0.0).unwrap(); }
            let ds = s.sorted_distances(&[q], pts.len()).unwrap();
            let ln_t = (horizon as f64).ln();
            let ok = |j: usize| lip * ds[j - 1] <= (ln_t / j as f64).sqrt();
            match adaptive_select_k(&c, &s, &[q]).unwrap() {
                None => prop_assert!(!ok(1)),
                Some(ch) => {
                    prop_assert!(ok(ch.k));
                    if ch.k < ds.len() { prop_assert!(!ok(ch.k + 1)); }
                }
            }
        }
    }
}
