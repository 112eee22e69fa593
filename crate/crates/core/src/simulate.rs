//! Trial loop, regret accounting and multi-trial aggregation.
//!
//! Each trial owns its environment, policy and RNG. Trial `i` of an
//! experiment with master seed `s` is seeded with [`trial_seed`]`(s, i)`, so
//! a trial's trace does not depend on which thread ran it or in what order.
//! Aggregation always reduces traces in trial-index order, which makes the
//! result bit-identical for every thread count.

use rand::SeedableRng;
use rayon::prelude::*;
use thiserror::Error;

use crate::env::{Environment, SimRng};
use crate::policy::{Policy, PolicyError};
use crate::stats::{mean, ols_slope, sample_std};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("trial {trial}: {source}")]
    Policy {
        trial: usize,
        #[source]
        source: PolicyError,
    },
    #[error("trial {trial}: policy returned action {action} but only {num_actions} exist")]
    ActionOutOfRange {
        trial: usize,
        action: usize,
        num_actions: usize,
    },
    #[error("trial {trial}: {message}")]
    Setup { trial: usize, message: String },
    #[error("{0}")]
    InvalidInput(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Per-step regret of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    /// `eta*(X_t) - eta_{A_t}(X_t)` for each step.
    pub inst: Vec<f64>,
    /// Running sums of `inst`.
    pub cum: Vec<f64>,
    pub actions: Vec<usize>,
}

impl RegretTrace {
    fn with_capacity(n: usize) -> Self {
        Self {
            inst: Vec::with_capacity(n),
            cum: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, action: usize, regret: f64) {
        let prev = self.cum.last().copied().unwrap_or(0.0);
        self.inst.push(regret);
        self.cum.push(prev + regret);
        self.actions.push(action);
    }

    pub fn final_regret(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }
}

/// Seed of trial `trial` under `master`: the `trial + 1`-th output of a
/// SplitMix64 stream started at `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut z = master.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `horizon` steps of `policy` against `env`.
///
/// Each step draws a context, reveals the true means to the policy (only the
/// oracle reads them), asks for an action, samples its reward and feeds it
/// back. Regret is measured on the means, not on the noisy reward.
pub fn run_trial<E, P>(
    env: &mut E,
    policy: &mut P,
    horizon: usize,
    seed: u64,
) -> Result<RegretTrace, SimError>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    run_trial_indexed(env, policy, horizon, seed, 0)
}

fn run_trial_indexed<E, P>(
    env: &mut E,
    policy: &mut P,
    horizon: usize,
    seed: u64,
    trial: usize,
) -> Result<RegretTrace, SimError>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    if policy.num_actions() != env.num_actions() {
        return Err(SimError::Setup {
            trial,
            message: format!(
                "policy has {} actions, environment has {}",
                policy.num_actions(),
                env.num_actions()
            ),
        });
    }
    let wrap = |source| SimError::Policy { trial, source };
    let mut rng = SimRng::seed_from_u64(seed);
    let mut trace = RegretTrace::with_capacity(horizon);
    for _ in 0..horizon {
        let round = env.next_round(&mut rng);
        policy.reveal_means(&round.means);
        let action = policy.act(&round.context).map_err(wrap)?;
        if action >= round.means.len() {
            return Err(SimError::ActionOutOfRange {
                trial,
                action,
                num_actions: round.means.len(),
            });
        }
        let reward = env.sample_reward(&round, action, &mut rng);
        policy.observe(&round.context, action, reward).map_err(wrap)?;
        trace.push(action, round.regret(action));
    }
    Ok(trace)
}

/// Trial count, horizon, master seed and worker count of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentPlan {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
}

/// Runs every trial of `plan` and returns the traces in trial order.
///
/// `build` receives the trial index and its seed and returns a fresh
/// environment and policy.
pub fn run_trials<E, P, F>(plan: &ExperimentPlan, build: F) -> Result<Vec<RegretTrace>, SimError>
where
    E: Environment,
    P: Policy,
    F: Fn(usize, u64) -> Result<(E, P), String> + Sync,
{
    if plan.horizon == 0 || plan.trials == 0 {
        return Err(SimError::InvalidInput(
            "horizon and trial count must be positive".into(),
        ));
    }
    let one = |i: usize| {
        let seed = trial_seed(plan.seed, i as u64);
        let (mut env, mut policy) =
            build(i, seed).map_err(|message| SimError::Setup { trial: i, message })?;
        run_trial_indexed(&mut env, &mut policy, plan.horizon, seed, i)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.threads)
        .build()
        .map_err(|e| SimError::ThreadPool(e.to_string()))?;
    let results: Vec<Result<RegretTrace, SimError>> =
        pool.install(|| (0..plan.trials).into_par_iter().map(one).collect());
    results.into_iter().collect()
}

/// Per-step mean and spread of cumulative regret across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub mean: Vec<f64>,
    /// Sample standard deviation (divisor `m - 1`; zero when `m = 1`).
    pub std: Vec<f64>,
    pub trials: usize,
    /// Digest of the configuration that produced the traces.
    pub digest: String,
}

impl AggregateResult {
    /// Reduces `traces` in the given order. All traces must share a length.
    pub fn from_traces(traces: &[RegretTrace], digest: impl Into<String>) -> Result<Self, SimError> {
        let Some(first) = traces.first() else {
            return Err(SimError::InvalidInput("no traces to aggregate".into()));
        };
        let horizon = first.cum.len();
        if traces.iter().any(|t| t.cum.len() != horizon) {
            return Err(SimError::InvalidInput("traces differ in length".into()));
        }
        let mut column = vec![0.0; traces.len()];
        let mut mean_curve = Vec::with_capacity(horizon);
        let mut std_curve = Vec::with_capacity(horizon);
        for t in 0..horizon {
            for (slot, tr) in column.iter_mut().zip(traces) {
                *slot = tr.cum[t];
            }
            mean_curve.push(mean(&column));
            std_curve.push(sample_std(&column));
        }
        Ok(Self {
            mean: mean_curve,
            std: std_curve,
            trials: traces.len(),
            digest: digest.into(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_std(&self) -> f64 {
        self.std.last().copied().unwrap_or(0.0)
    }

    /// Standard error of the final mean, `std / sqrt(m)`.
    pub fn final_se(&self) -> f64 {
        self.final_std() / (self.trials as f64).sqrt()
    }
}

/// Runs and aggregates an experiment.
pub fn run_experiment<E, P, F>(
    plan: &ExperimentPlan,
    digest: impl Into<String>,
    build: F,
) -> Result<AggregateResult, SimError>
where
    E: Environment,
    P: Policy,
    F: Fn(usize, u64) -> Result<(E, P), String> + Sync,
{
    let traces = run_trials(plan, build)?;
    AggregateResult::from_traces(&traces, digest)
}

/// Slope of `ln R(T)` against `ln T` over `(T, R(T))` pairs.
pub fn fit_regret_exponent(points: &[(usize, f64)]) -> Result<f64, SimError> {
    if points.len() < 3 {
        return Err(SimError::InvalidInput(format!(
            "need at least 3 horizons, got {}",
            points.len()
        )));
    }
    if let Some((t, r)) = points.iter().find(|(t, r)| !(*r > 0.0) || *t == 0) {
        return Err(SimError::InvalidInput(format!(
            "regret at horizon {t} is {r}; the fit needs positive values"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|(t, _)| (*t as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, r)| r.ln()).collect();
    ols_slope(&xs, &ys).ok_or_else(|| SimError::InvalidInput("horizons must differ".into()))
}

/// `true` when `a`'s final mean is below `b`'s by at least the combined
/// standard error `sqrt(se_a^2 + se_b^2)`.
pub fn beats_by_one_se(a: &AggregateResult, b: &AggregateResult) -> bool {
    let se = a.final_se().hypot(b.final_se());
    b.final_mean() - a.final_mean() >= se
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ContextDistribution, RewardFamily, RewardKind, SyntheticEnv};
    use crate::policy::{Oracle, UniformRandom};
    use proptest::prelude::*;

    fn linear_uniform(sigma: f64) -> SyntheticEnv {
        SyntheticEnv::new(
            ContextDistribution::uniform_box(1, 1.0).unwrap(),
            RewardFamily::new(RewardKind::LinearPair, sigma).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn oracle_has_zero_regret() {
        let mut env = linear_uniform(0.5);
        let mut p = Oracle::new(2);
        let tr = run_trial(&mut env, &mut p, 500, 3).unwrap();
        assert_eq!(tr.final_regret(), 0.0);
        assert_eq!(tr.cum.len(), 500);
    }

    #[test]
    fn same_seed_same_trace() {
        let run = || {
            let mut env = linear_uniform(0.5);
            let mut p = UniformRandom::new(2, 9);
            run_trial(&mut env, &mut p, 300, 42).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn random_policy_regret_is_half_per_step() {
        // Wrong arm with probability 1/2 at cost 2|X|, E|X| = 1/2.
        let plan = ExperimentPlan {
            horizon: 1000,
            trials: 100,
            seed: 1,
            threads: 0,
        };
        let agg = run_experiment(&plan, "", |_, s| {
            Ok((linear_uniform(0.5), UniformRandom::new(2, s)))
        })
        .unwrap();
        assert!((agg.final_mean() - 500.0).abs() < 25.0, "{}", agg.final_mean());
    }

    #[test]
    fn single_trial_aggregate() {
        let mut env = linear_uniform(0.5);
        let mut p = UniformRandom::new(2, 0);
        let tr = run_trial(&mut env, &mut p, 50, 0).unwrap();
        let agg = AggregateResult::from_traces(std::slice::from_ref(&tr), "x").unwrap();
        assert_eq!(agg.mean, tr.cum);
        assert!(agg.std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let go = |threads| {
            let plan = ExperimentPlan {
                horizon: 200,
                trials: 16,
                seed: 77,
                threads,
            };
            run_experiment(&plan, "", |_, s| {
                Ok((linear_uniform(0.5), UniformRandom::new(2, s)))
            })
            .unwrap()
        };
        assert_eq!(go(1), go(4));
    }

    #[test]
    fn setup_errors_name_the_trial() {
        let plan = ExperimentPlan {
            horizon: 10,
            trials: 4,
            seed: 0,
            threads: 1,
        };
        let err = run_trials(&plan, |i, s| {
            if i == 2 {
                Err("boom".to_string())
            } else {
                Ok((linear_uniform(0.5), UniformRandom::new(2, s)))
            }
        })
        .unwrap_err();
        assert!(err.to_string().starts_with("trial 2"), "{err}");
    }

    #[test]
    fn exponent_fits() {
        let pts: Vec<_> = [100usize, 1000, 10000].iter().map(|&t| (t, (t as f64).sqrt())).collect();
        assert!((fit_regret_exponent(&pts).unwrap() - 0.5).abs() < 1e-12);
        let flat = [(10, 3.0), (20, 3.0), (40, 3.0)];
        assert!(fit_regret_exponent(&flat).unwrap().abs() < 1e-12);
        assert!(fit_regret_exponent(&[(10, 1.0), (20, 0.0), (40, 3.0)]).is_err());
        assert!(fit_regret_exponent(&[(10, 1.0), (20, 2.0)]).is_err());
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let seeds: std::collections::HashSet<_> = (0..10_000).map(|i| trial_seed(5, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    proptest! {
        #[test]
        fn aggregate_is_pointwise_mean(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..2.0, 8), 1..10)
        ) {
            let traces: Vec<RegretTrace> = rows
                .iter()
                .map(|inst| {
                    let mut tr = RegretTrace::with_capacity(inst.len());
                    for &r in inst {
                        tr.push(0, r);
                    }
                    tr
                })
                .collect();
            let agg = AggregateResult::from_traces(&traces, "").unwrap();
            for t in 0..8 {
                let direct = traces.iter().map(|tr| tr.cum[t]).sum::<f64>() / traces.len() as f64;
                prop_assert!((agg.mean[t] - direct).abs() < 1e-12);
                prop_assert!(agg.std[t] >= 0.0);
                if t > 0 {
                    prop_assert!(agg.mean[t] >= agg.mean[t - 1]);
                }
            }
            let mut rev = traces.clone();
            rev.reverse();
            let agg_rev = AggregateResult::from_traces(&rev, "").unwrap();
            for t in 0..8 {
                prop_assert!((agg.mean[t] - agg_rev.mean[t]).abs() < 1e-12);
                prop_assert!((agg.std[t] - agg_rev.std[t]).abs() < 1e-12);
            }
        }
    }
}
