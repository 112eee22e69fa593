//! Environments: context laws, reward families, lower-bound instances and
//! the Monte Carlo probes used to check their assumptions.

pub mod dist;
pub mod hard;
pub mod probe;
pub mod reward;

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use dist::{ContextDistribution, Marginal};
pub use hard::{
    unit_ball_volume, ConstraintCheck, HardInstance, HardInstanceError, HardInstanceParams,
    HardVariant,
};
pub use probe::{default_density_grid, margin_probe, tail_exponent_probe, ProbeResult};
pub use reward::{add_noise, RewardFamily, RewardKind};

/// Random number generator used for every simulated trial.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    HardInstance(#[from] HardInstanceError),
    #[error("every probe estimate is zero; widen the grid or add samples")]
    DegenerateProbe,
}

/// One step of an environment: the context and every action's mean reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub context: Vec<f64>,
    pub means: Vec<f64>,
}

impl Round {
    pub fn optimal_reward(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Instantaneous regret of `action`.
    pub fn regret(&self, action: usize) -> f64 {
        self.optimal_reward() - self.means[action]
    }
}

/// A stream of contexts with known mean rewards and additive Gaussian noise.
pub trait Environment: Send {
    fn dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn noise_sigma(&self) -> f64;
    fn next_round(&mut self, rng: &mut SimRng) -> Round;

    /// Noisy reward of `action` in `round`.
    fn sample_reward(&self, round: &Round, action: usize, rng: &mut SimRng) -> f64 {
        add_noise(round.means[action], self.noise_sigma(), rng)
    }
}

/// I.i.d. contexts from `dist` with rewards from `family`.
#[derive(Debug, Clone)]
pub struct SyntheticEnv {
    pub dist: ContextDistribution,
    pub family: RewardFamily,
}

impl SyntheticEnv {
    pub fn new(dist: ContextDistribution, family: RewardFamily) -> Result<Self, EnvError> {
        if let RewardKind::HardInstance(h) = &family.kind {
            if h.dim != dist.dim() {
                return Err(EnvError::InvalidParameters(format!(
                    "hard-instance reward has dim {}, distribution has dim {}",
                    h.dim,
                    dist.dim()
                )));
            }
        }
        Ok(Self { dist, family })
    }

    /// Contexts and rewards of one lower-bound instance.
    pub fn hard(instance: HardInstance, sigma: f64) -> Result<Self, EnvError> {
        let h = Arc::new(instance);
        let family = RewardFamily::new(RewardKind::HardInstance(h.clone()), sigma)
            .map_err(EnvError::InvalidParameters)?;
        Self::new(ContextDistribution::HardInstance(h), family)
    }
}

impl Environment for SyntheticEnv {
    fn dim(&self) -> usize {
        self.dist.dim()
    }

    fn num_actions(&self) -> usize {
        self.family.num_actions()
    }

    fn noise_sigma(&self) -> f64 {
        self.family.sigma
    }

    fn next_round(&mut self, rng: &mut SimRng) -> Round {
        let context = self.dist.sample(rng);
        let means = self.family.means(&context);
        Round { context, means }
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn noise_sigma(&self) -> f64 {
        (**self).noise_sigma()
    }
    fn next_round(&mut self, rng: &mut SimRng) -> Round {
        (**self).next_round(rng)
    }
    fn sample_reward(&self, round: &Round, action: usize, rng: &mut SimRng) -> f64 {
        (**self).sample_reward(round, action, rng)
    }
}
