//! Bandit policies behind a common act/observe contract.
//!
//! A policy is driven one step at a time: [`Policy::act`] is called once with
//! the current context and returns an action, then [`Policy::observe`] is
//! called with the same context, the chosen action, and the realized reward.
//! Any other call order is a protocol error.

use std::cmp::Ordering;

use thiserror::Error;

use crate::knn_store::KnnError;

mod abse;
mod baseline;
mod knn;
mod ucbogram;

pub use abse::{Abse, AbseConfig};
pub use baseline::{Oracle, UniformRandom};
pub use knn::{
    adaptive_b, adaptive_select_k, adaptive_ucb, default_fixed_k, fixed_b, fixed_ucb,
    margin_fixed_k, AdaptiveChoice, Bandwidth, KnnUcb, PolicyConfig,
};
pub use ucbogram::{Ucbogram, UcbogramConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy configuration: {0}")]
    InvalidConfig(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("choose_action called with no actions")]
    NoActions,
    #[error(transparent)]
    Knn(#[from] KnnError),
}

/// An upper confidence bound: a finite estimate or the infinite sentinel used
/// when no estimate can be formed yet.
///
/// `Infinite` is strictly greater than every `Finite`. Finite values compare
/// with `f64::total_cmp`.
#[derive(Debug, Clone, Copy)]
pub enum UcbValue {
    Finite(f64),
    Infinite,
}

impl UcbValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            UcbValue::Finite(v) => Some(v),
            UcbValue::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, UcbValue::Infinite)
    }
}

impl Ord for UcbValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (UcbValue::Infinite, UcbValue::Infinite) => Ordering::Equal,
            (UcbValue::Infinite, UcbValue::Finite(_)) => Ordering::Greater,
            (UcbValue::Finite(_), UcbValue::Infinite) => Ordering::Less,
            (UcbValue::Finite(a), UcbValue::Finite(b)) => a.total_cmp(b),
        }
    }
}

impl PartialOrd for UcbValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for UcbValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for UcbValue {}

/// Index of the largest UCB; ties go to the smallest action index.
pub fn choose_action(ucbs: &[UcbValue]) -> Result<usize, PolicyError> {
    let mut best = 0;
    let first = ucbs.first().ok_or(PolicyError::NoActions)?;
    let mut best_val = *first;
    for (a, &v) in ucbs.iter().enumerate().skip(1) {
        if v > best_val {
            best = a;
            best_val = v;
        }
    }
    Ok(best)
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    fn num_actions(&self) -> usize;

    fn act(&mut self, x: &[f64]) -> Result<usize, PolicyError>;

    fn observe(&mut self, x: &[f64], action: usize, reward: f64) -> Result<(), PolicyError>;

    /// Receives the true mean rewards at the context about to be passed to
    /// `act`. Only the oracle baseline reads them.
    fn reveal_means(&mut self, _means: &[f64]) {}
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &'static str {
        (**self).name()
    }
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn act(&mut self, x: &[f64]) -> Result<usize, PolicyError> {
        (**self).act(x)
    }
    fn observe(&mut self, x: &[f64], action: usize, reward: f64) -> Result<(), PolicyError> {
        (**self).observe(x, action, reward)
    }
    fn reveal_means(&mut self, means: &[f64]) {
        (**self).reveal_means(means)
    }
}

/// Tracks the act/observe alternation for a policy.
#[derive(Debug, Clone, Default)]
pub(crate) struct Protocol {
    pending: Option<(Vec<f64>, usize)>,
}

impl Protocol {
    pub(crate) fn begin(&self) -> Result<(), PolicyError> {
        if self.pending.is_some() {
            return Err(PolicyError::Protocol(
                "act called twice without an observe in between".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn record(&mut self, x: &[f64], action: usize) {
        self.pending = Some((x.to_vec(), action));
    }

    pub(crate) fn finish(&mut self, x: &[f64], action: usize) -> Result<(), PolicyError> {
        match self.pending.take() {
            None => Err(PolicyError::Protocol("observe called before act".into())),
            Some((px, pa)) => {
                if px.as_slice() != x {
                    Err(PolicyError::Protocol(
                        "observe context differs from the context passed to act".into(),
                    ))
                } else if pa != action {
                    Err(PolicyError::Protocol(format!(
                        "observe reports action {action} but act chose {pa}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}
