//! Builds environments and policies from a configuration and runs them.

use std::sync::Arc;

use rand::SeedableRng;
use thiserror::Error;

use crate::config::{DistKind, EnvKind, ExperimentConfig, PolicyKind, RewardChoice};
use crate::dataset::{ClassificationEnv, IdxError, LabeledImageSet};
use crate::env::{
    ContextDistribution, EnvError, Environment, HardInstance, HardInstanceParams, RewardFamily,
    RewardKind, SimRng, SyntheticEnv,
};
use crate::policy::{
    Abse, AbseConfig, KnnUcb, Oracle, Policy, PolicyConfig, PolicyError, Ucbogram,
    UcbogramConfig, UniformRandom,
};
use crate::simulate::{run_trials, trial_seed, AggregateResult, ExperimentPlan, RegretTrace, SimError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Data(#[from] IdxError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Invalid(String),
}

/// A resolved configuration plus the shared, immutable pieces every trial
/// uses: the lower-bound instance and the image set.
#[derive(Debug, Clone)]
pub struct Scenario {
    cfg: ExperimentConfig,
    hard: Option<Arc<HardInstance>>,
    data: Option<Arc<LabeledImageSet>>,
}

/// Traces and aggregate of one run; for a bin sweep, those of the best count.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub traces: Vec<RegretTrace>,
    pub aggregate: AggregateResult,
    /// Bin count of the reported UCBogram run.
    pub bins: Option<usize>,
    /// Final mean regret of every bin count tried.
    pub candidates: Vec<(usize, f64)>,
}

impl Scenario {
    /// Loads data or builds the hard instance as needed, then resolves `cfg`.
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let data = match cfg.env.kind {
            EnvKind::Mnist => {
                let (Some(images), Some(labels)) = (&cfg.data.images, &cfg.data.labels) else {
                    return Err(ExperimentError::Invalid(
                        "data.images and data.labels are required".into(),
                    ));
                };
                let set = LabeledImageSet::from_files(images, labels)?.truncated(cfg.data.limit);
                Some(Arc::new(set))
            }
            _ => None,
        };
        Self::with_data(cfg, data)
    }

    /// As [`new`](Self::new) with an already loaded image set.
    pub fn with_data(
        cfg: &ExperimentConfig,
        data: Option<Arc<LabeledImageSet>>,
    ) -> Result<Self, ExperimentError> {
        let cfg = cfg.resolve(data.as_ref().map(|d| d.pixels_per_image()));
        let hard = match cfg.env.kind {
            EnvKind::Hard => Some(Arc::new(build_hard_instance(&cfg)?)),
            _ => None,
        };
        let s = Self { cfg, hard, data };
        // Surface parameter errors before any trial starts.
        s.environment()?;
        for &b in s.bin_candidates() {
            s.policy(b, 0)?;
        }
        Ok(s)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn hard_instance(&self) -> Option<&Arc<HardInstance>> {
        self.hard.as_ref()
    }

    fn bin_candidates(&self) -> &[usize] {
        match self.cfg.policy.kind {
            PolicyKind::Ucbogram => &self.cfg.policy.bins,
            _ => &[0],
        }
    }

    pub fn context_distribution(&self) -> Result<ContextDistribution, EnvError> {
        let e = &self.cfg.env;
        let dist = match (e.kind, &self.hard) {
            (EnvKind::Hard, Some(h)) => Ok(ContextDistribution::HardInstance(h.clone())),
            _ => match e.distribution {
                DistKind::Uniform => ContextDistribution::uniform_box(e.dim, e.half_width),
                DistKind::Gaussian => ContextDistribution::standard_gaussian(e.dim),
                DistKind::StudentT => ContextDistribution::student_t(e.dim, e.dof),
                DistKind::Cauchy => ContextDistribution::cauchy(e.dim),
            },
        };
        dist.map_err(EnvError::InvalidParameters)
    }

    pub fn reward_family(&self) -> Result<RewardFamily, EnvError> {
        let kind = match (&self.hard, self.cfg.env.reward) {
            (Some(h), _) => RewardKind::HardInstance(h.clone()),
            (None, RewardChoice::Linear) => RewardKind::LinearPair,
            (None, RewardChoice::Trig) => RewardKind::TrigPair,
        };
        RewardFamily::new(kind, self.cfg.env.sigma).map_err(EnvError::InvalidParameters)
    }

    /// A fresh environment for one trial.
    pub fn environment(&self) -> Result<Box<dyn Environment>, ExperimentError> {
        if let Some(data) = &self.data {
            return Ok(Box::new(ClassificationEnv::new(data.clone())?));
        }
        Ok(Box::new(SyntheticEnv::new(
            self.context_distribution()?,
            self.reward_family()?,
        )?))
    }

    fn num_actions(&self) -> usize {
        match self.cfg.env.kind {
            EnvKind::Mnist => crate::dataset::NUM_CLASSES,
            _ => 2,
        }
    }

    /// Nearest-neighbor policy inputs after resolution.
    pub fn knn_config(&self) -> PolicyConfig {
        let p = &self.cfg.policy;
        PolicyConfig {
            horizon: self.cfg.run.horizon,
            num_actions: self.num_actions(),
            dim: self.cfg.env.dim,
            sigma: p.sigma.unwrap_or(self.cfg.env.sigma),
            lipschitz: p.lipschitz.unwrap_or(1.0),
            conf_scale: p.conf_scale,
        }
    }

    /// A fresh policy for one trial; `bins` applies to UCBogram only.
    pub fn policy(&self, bins: usize, seed: u64) -> Result<Box<dyn Policy>, ExperimentError> {
        let p = &self.cfg.policy;
        let n = self.num_actions();
        let d = self.cfg.env.dim;
        Ok(match p.kind {
            PolicyKind::FixedKnn => {
                let k = p.k.ok_or_else(|| ExperimentError::Invalid("policy.k unresolved".into()))?;
                Box::new(KnnUcb::fixed(self.knn_config(), k)?)
            }
            PolicyKind::AdaptiveKnn => Box::new(KnnUcb::adaptive(self.knn_config())?),
            PolicyKind::Ucbogram => Box::new(Ucbogram::new(UcbogramConfig {
                clip: p.clip,
                width_scale: p.width_scale,
                ..UcbogramConfig::new(n, d, bins)
            })?),
            PolicyKind::Abse => Box::new(Abse::new(AbseConfig {
                clip: p.clip,
                max_depth: p.max_depth,
                conf: p.abse_conf,
                split_scale: p.split_scale,
                ..AbseConfig::new(n, d, self.cfg.run.horizon)
            })?),
            PolicyKind::Oracle => Box::new(Oracle::new(n)),
            PolicyKind::Random => Box::new(UniformRandom::new(n, trial_seed(seed, u64::MAX))),
        })
    }

    fn plan(&self, threads: usize) -> ExperimentPlan {
        ExperimentPlan {
            horizon: self.cfg.run.horizon,
            trials: self.cfg.run.trials,
            seed: self.cfg.run.seed,
            threads,
        }
    }

    /// Runs every trial; for UCBogram with several bin counts, runs each and
    /// keeps the one with the lowest final mean regret (ties to fewer bins).
    pub fn run(&self, threads: usize) -> Result<RunOutcome, ExperimentError> {
        let plan = self.plan(threads);
        let mut best: Option<RunOutcome> = None;
        let mut candidates = Vec::new();
        for &bins in self.bin_candidates() {
            let traces = run_trials(&plan, |_, seed| {
                let env = self.environment().map_err(|e| e.to_string())?;
                let pol = self.policy(bins, seed).map_err(|e| e.to_string())?;
                Ok((env, pol))
            })?;
            let aggregate = AggregateResult::from_traces(&traces, self.cfg.digest())?;
            let fm = aggregate.final_mean();
            let is_ucbogram = self.cfg.policy.kind == PolicyKind::Ucbogram;
            if is_ucbogram {
                candidates.push((bins, fm));
            }
            if best.as_ref().is_none_or(|b| fm < b.aggregate.final_mean()) {
                best = Some(RunOutcome {
                    traces,
                    aggregate,
                    bins: is_ucbogram.then_some(bins),
                    candidates: Vec::new(),
                });
            }
        }
        let mut out = best.ok_or_else(|| ExperimentError::Invalid("policy.bins is empty".into()))?;
        out.candidates = candidates;
        Ok(out)
    }
}

/// The lower-bound instance described by the `hard.*` keys, `env.dim` and `run.T`.
pub fn build_hard_instance(cfg: &ExperimentConfig) -> Result<HardInstance, EnvError> {
    let params = HardInstanceParams {
        horizon: cfg.run.horizon,
        dim: cfg.env.dim,
        alpha: cfg.hard.alpha,
        c_alpha: cfg.hard.c_alpha,
        beta: cfg.hard.beta,
        c_beta: cfg.hard.c_beta,
        variant: cfg.hard.variant.into(),
    };
    let mut rng = SimRng::seed_from_u64(cfg.hard.seed);
    Ok(HardInstance::build(&params, &mut rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, Command};

    fn scenario(extra: &str) -> Scenario {
        let text = format!("run.T = 200\nrun.trials = 4\nrun.seed = 3\n{extra}");
        Scenario::new(&parse_config(&text, Command::Run).unwrap()).unwrap()
    }

    #[test]
    fn oracle_scenario_has_zero_regret() {
        let out = scenario("policy.kind = oracle\nenv.distribution = cauchy\nenv.reward = trig\n")
            .run(2)
            .unwrap();
        assert!(out.aggregate.mean.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn bin_sweep_reports_best() {
        let out = scenario("policy.kind = ucbogram\npolicy.bins = 2, 4\n").run(1).unwrap();
        assert_eq!(out.candidates.len(), 2);
        let best = out.candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        assert_eq!(out.aggregate.final_mean(), best);
        assert!(out.bins.is_some());
    }

    #[test]
    fn hard_scenario_runs() {
        let s = scenario("policy.kind = adaptive_knn\nenv.kind = hard\nenv.dim = 1\n");
        assert!(s.hard_instance().is_some());
        let out = s.run(1).unwrap();
        assert!(out.aggregate.final_mean() >= 0.0);
    }

    #[test]
    fn every_policy_kind_runs() {
        for kind in ["fixed_knn", "adaptive_knn", "ucbogram", "abse", "oracle", "random"] {
            let s = scenario(&format!("policy.kind = {kind}\nenv.dim = 2\nenv.distribution = gaussian\n"));
            let out = s.run(1).unwrap();
            assert_eq!(out.aggregate.horizon(), 200, "{kind}");
        }
    }
}
