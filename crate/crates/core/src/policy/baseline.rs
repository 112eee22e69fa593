//! Reference policies: the oracle that knows the mean rewards, and uniform
//! random play.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Policy, PolicyError, Protocol};

/// Plays `argmax_a eta_a(x)` from the means revealed by the driver; ties go
/// to the lowest index. Its regret is zero by construction.
#[derive(Debug, Clone)]
pub struct Oracle {
    num_actions: usize,
    means: Option<Vec<f64>>,
    protocol: Protocol,
}

impl Oracle {
    pub fn new(num_actions: usize) -> Self {
        Self {
            num_actions,
            means: None,
            protocol: Protocol::default(),
        }
    }
}

impl Policy for Oracle {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn reveal_means(&mut self, means: &[f64]) {
        self.means = Some(means.to_vec());
    }

    fn act(&mut self, x: &[f64]) -> Result<usize, PolicyError> {
        self.protocol.begin()?;
        let means = self
            .means
            .take()
            .ok_or_else(|| PolicyError::Protocol("oracle acted without revealed means".into()))?;
        let mut best = 0;
        for (a, &m) in means.iter().enumerate() {
            if m > means[best] {
                best = a;
            }
        }
        self.protocol.record(x, best);
        Ok(best)
    }

    fn observe(&mut self, x: &[f64], action: usize, _reward: f64) -> Result<(), PolicyError> {
        self.protocol.finish(x, action)
    }
}

#[derive(Debug, Clone)]
pub struct UniformRandom {
    num_actions: usize,
    rng: ChaCha8Rng,
    protocol: Protocol,
}

impl UniformRandom {
    pub fn new(num_actions: usize, seed: u64) -> Self {
        Self {
            num_actions,
            rng: ChaCha8Rng::seed_from_u64(seed),
            protocol: Protocol::default(),
        }
    }
}

impl Policy for UniformRandom {
    fn name(&self) -> &'static str {
        "random"
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn act(&mut self, x: &[f64]) -> Result<usize, PolicyError> {
        self.protocol.begin()?;
        let a = self.rng.random_range(0..self.num_actions);
        self.protocol.record(x, a);
        Ok(a)
    }

    fn observe(&mut self, x: &[f64], action: usize, _reward: f64) -> Result<(), PolicyError> {
        self.protocol.finish(x, action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_takes_best_mean() {
        let mut o = Oracle::new(3);
        o.reveal_means(&[0.1, 0.7, 0.7]);
        assert_eq!(o.act(&[0.0]).unwrap(), 1);
        o.observe(&[0.0], 1, 0.0).unwrap();
        assert!(o.act(&[0.0]).is_err());
    }

    #[test]
    fn random_is_seeded() {
        let run = |seed| {
            let mut p = UniformRandom::new(4, seed);
            (0..32)
                .map(|_| {
                    let a = p.act(&[0.0]).unwrap();
                    p.observe(&[0.0], a, 0.0).unwrap();
                    a
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
        assert!(run(7).iter().all(|&a| a < 4));
    }
}
