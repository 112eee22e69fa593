//! Context distributions.
//!
//! Multivariate distributions are coordinate-wise products of one-dimensional
//! marginals, so a 2-d Cauchy context is two independent standard Cauchy draws.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::hard::HardInstance;

/// A one-dimensional context law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Marginal {
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Standard normal.
    Gaussian,
    /// Student-t with `dof` degrees of freedom.
    StudentT { dof: f64 },
    /// Standard Cauchy.
    Cauchy,
}

impl Marginal {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform { half_width } => rng.random_range(-half_width..=half_width),
            Marginal::Gaussian => rng.sample(StandardNormal),
            Marginal::StudentT { dof } => StudentT::new(dof).expect("validated dof").sample(rng),
            Marginal::Cauchy => Cauchy::new(0.0, 1.0).expect("unit scale").sample(rng),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { half_width } => {
                if x.abs() <= half_width {
                    0.5 / half_width
                } else {
                    0.0
                }
            }
            Marginal::Gaussian => (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            Marginal::StudentT { dof } => {
                let log_norm = ln_gamma((dof + 1.0) / 2.0)
                    - ln_gamma(dof / 2.0)
                    - 0.5 * (dof * PI).ln();
                (log_norm - (dof + 1.0) / 2.0 * (1.0 + x * x / dof).ln()).exp()
            }
            Marginal::Cauchy => 1.0 / (PI * (1.0 + x * x)),
        }
    }

    /// Largest value of the density (attained at 0).
    pub fn peak_density(&self) -> f64 {
        self.pdf(0.0)
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            Marginal::Uniform { half_width } if !(half_width > 0.0 && half_width.is_finite()) => {
                Err(format!("uniform half_width must be > 0, got {half_width}"))
            }
            Marginal::StudentT { dof } if !(dof > 0.0 && dof.is_finite()) => {
                Err(format!("student-t dof must be > 0, got {dof}"))
            }
            _ => Ok(()),
        }
    }
}

/// Distribution of the context `X_t`.
#[derive(Debug, Clone)]
pub enum ContextDistribution {
    /// Independent coordinates.
    Product(Vec<Marginal>),
    /// Ball mixture of a lower-bound construction.
    HardInstance(Arc<HardInstance>),
}

impl ContextDistribution {
    pub fn product(marginals: Vec<Marginal>) -> Result<Self, String> {
        if marginals.is_empty() {
            return Err("a product distribution needs at least one coordinate".into());
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(ContextDistribution::Product(marginals))
    }

    pub fn uniform_box(dim: usize, half_width: f64) -> Result<Self, String> {
        Self::product(vec![Marginal::Uniform { half_width }; dim])
    }

    pub fn standard_gaussian(dim: usize) -> Result<Self, String> {
        Self::product(vec![Marginal::Gaussian; dim])
    }

    pub fn student_t(dim: usize, dof: f64) -> Result<Self, String> {
        Self::product(vec![Marginal::StudentT { dof }; dim])
    }

    pub fn cauchy(dim: usize) -> Result<Self, String> {
        Self::product(vec![Marginal::Cauchy; dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            ContextDistribution::Product(m) => m.len(),
            ContextDistribution::HardInstance(h) => h.dim,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ContextDistribution::Product(m) => m.iter().map(|m| m.sample(rng)).collect(),
            ContextDistribution::HardInstance(h) => h.sample_context(rng),
        }
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        match self {
            ContextDistribution::Product(m) => m.iter().zip(x).map(|(m, &v)| m.pdf(v)).product(),
            ContextDistribution::HardInstance(h) => h.pdf(x),
        }
    }

    pub fn peak_density(&self) -> f64 {
        match self {
            ContextDistribution::Product(m) => m.iter().map(Marginal::peak_density).product(),
            ContextDistribution::HardInstance(h) => h.peak_density(),
        }
    }

    /// Nominal tail exponent `beta` of `P(f(X) <= u) <= C u^beta`.
    ///
    /// Bounded support and Gaussian tails give 1. A law with finite moments
    /// of every order below `p` admits every `beta < p / (p + d)`; the
    /// boundary value is reported, which is 4/5 and 2/3 for Student-t(4) in
    /// one and two dimensions and 1/2 and 1/3 for Cauchy. Mixed products have
    /// no single nominal value.
    pub fn nominal_tail_exponent(&self) -> Option<f64> {
        let ContextDistribution::Product(m) = self else {
            return None;
        };
        let first = m[0];
        if m.iter().any(|x| std::mem::discriminant(x) != std::mem::discriminant(&first)) {
            return None;
        }
        let d = m.len() as f64;
        match first {
            Marginal::Uniform { .. } | Marginal::Gaussian => Some(1.0),
            Marginal::StudentT { dof } => {
                if m.iter().all(|x| *x == first) {
                    Some(dof / (dof + d))
                } else {
                    None
                }
            }
            Marginal::Cauchy => Some(1.0 / (1.0 + d)),
        }
    }
}
