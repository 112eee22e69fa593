//! Flat `section.key = value` experiment configuration.
//!
//! Blank lines and text after `#` are ignored. Every problem in a file
//! (unknown key, malformed value, duplicate, missing required key, invalid
//! combination) is collected and reported together.
//!
//! [`ExperimentConfig::resolve`] fills defaults that depend on other fields
//! (the fixed-policy `k`, the policy's `L` and `sigma`). Output files start
//! with the resolved configuration as `# config: key = value` lines, and
//! [`parse_header`] reads those lines back into an identical configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::env::HardVariant;
use crate::policy::{default_fixed_k, margin_fixed_k};

/// Prefix of resolved-configuration lines in output files.
pub const HEADER_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Subcommand a configuration is validated for; each requires different keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Sweep,
    Probe,
    HardInstance,
    Mnist,
}

impl Command {
    fn required(self) -> &'static [&'static str] {
        match self {
            Command::Run => &["run.T", "run.trials", "run.seed", "policy.kind"],
            Command::Sweep => &["sweep.horizons", "run.trials", "run.seed", "policy.kind"],
            Command::Probe => &["run.seed", "probe.kind"],
            Command::HardInstance => &["run.T", "run.seed"],
            Command::Mnist => &[
                "run.T",
                "run.trials",
                "run.seed",
                "policy.kind",
                "data.images",
                "data.labels",
            ],
        }
    }
}

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!(
                        "expected one of {}, got `{}`",
                        [$($text),+].join(", "),
                        s
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(EnvKind { Synthetic => "synthetic", Hard => "hard", Mnist => "mnist" });
keyword_enum!(DistKind {
    Uniform => "uniform",
    Gaussian => "gaussian",
    StudentT => "student_t",
    Cauchy => "cauchy",
});
keyword_enum!(RewardChoice { Linear => "linear", Trig => "trig" });
keyword_enum!(PolicyKind {
    FixedKnn => "fixed_knn",
    AdaptiveKnn => "adaptive_knn",
    Ucbogram => "ucbogram",
    Abse => "abse",
    Oracle => "oracle",
    Random => "random",
});
keyword_enum!(ProbeKind { Tail => "tail", Margin => "margin" });
keyword_enum!(VariantName { Bounded => "bounded", Tailed => "tailed" });

impl From<VariantName> for HardVariant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Bounded => HardVariant::Bounded,
            VariantName::Tailed => HardVariant::Tailed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSection {
    pub kind: EnvKind,
    pub dim: usize,
    pub distribution: DistKind,
    pub half_width: f64,
    pub dof: f64,
    pub reward: RewardChoice,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardSection {
    pub variant: VariantName,
    pub alpha: f64,
    pub c_alpha: f64,
    pub beta: f64,
    pub c_beta: f64,
    /// Seed for the ball signs; the instance is shared by all trials.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Use only the first `limit` images.
    pub limit: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySection {
    pub kind: PolicyKind,
    pub k: Option<usize>,
    /// Margin exponent; when set, the default fixed `k` is `ceil(T^(2/(alpha+3)))`.
    pub alpha: Option<f64>,
    pub lipschitz: Option<f64>,
    pub sigma: Option<f64>,
    pub conf_scale: f64,
    /// Candidate bin counts; with more than one the best is reported.
    pub bins: Vec<usize>,
    pub clip: f64,
    pub width_scale: f64,
    pub max_depth: u32,
    pub abse_conf: f64,
    pub split_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub horizons: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSection {
    pub kind: ProbeKind,
    pub samples: usize,
    pub action: usize,
    /// Probe points; defaults to a log grid below the peak density.
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub env: EnvSection,
    pub hard: HardSection,
    pub data: DataSection,
    pub policy: PolicySection,
    pub sweep: SweepSection,
    pub probe: ProbeSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run: RunSection {
                horizon: 1000,
                trials: 100,
                seed: 0,
            },
            env: EnvSection {
                kind: EnvKind::Synthetic,
                dim: 1,
                distribution: DistKind::Uniform,
                half_width: 1.0,
                dof: 4.0,
                reward: RewardChoice::Linear,
                sigma: 0.5,
            },
            hard: HardSection {
                variant: VariantName::Bounded,
                alpha: 1.0,
                c_alpha: 2.0,
                beta: 0.5,
                c_beta: 1.0,
                seed: 0,
            },
            data: DataSection {
                images: None,
                labels: None,
                limit: 5000,
            },
            policy: PolicySection {
                kind: PolicyKind::AdaptiveKnn,
                k: None,
                alpha: None,
                lipschitz: None,
                sigma: None,
                conf_scale: 1.0,
                bins: vec![4, 8, 16, 32],
                clip: 3.0,
                width_scale: 1.0,
                max_depth: 4,
                abse_conf: 1.0,
                split_scale: 1.0,
            },
            sweep: SweepSection {
                horizons: vec![250, 500, 1000, 2000, 4000],
            },
            probe: ProbeSection {
                kind: ProbeKind::Tail,
                samples: 1_000_000,
                action: 0,
                grid: None,
            },
        }
    }
}

fn parse_positive<T: FromStr + PartialOrd + Default>(v: &str) -> Result<T, String> {
    match v.parse::<T>() {
        Ok(x) if x > T::default() => Ok(x),
        _ => Err(format!("expected a positive integer, got `{v}`")),
    }
}

fn parse_u64(v: &str) -> Result<u64, String> {
    v.parse()
        .map_err(|_| format!("expected an unsigned 64-bit integer, got `{v}`"))
}

fn parse_real(v: &str, positive: bool) -> Result<f64, String> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() && (!positive || x > 0.0) && x >= 0.0 => Ok(x),
        _ if positive => Err(format!("expected a positive real, got `{v}`")),
        _ => Err(format!("expected a nonnegative real, got `{v}`")),
    }
}

fn parse_list<T>(v: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let out: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err("expected a nonempty comma-separated list".into());
    }
    Ok(out)
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let real = |v: &str| parse_real(v, true);
        match key {
            "run.T" => self.run.horizon = parse_positive(v)?,
            "run.trials" => self.run.trials = parse_positive(v)?,
            "run.seed" => self.run.seed = parse_u64(v)?,
            "env.kind" => self.env.kind = v.parse()?,
            "env.dim" => self.env.dim = parse_positive(v)?,
            "env.distribution" => self.env.distribution = v.parse()?,
            "env.half_width" => self.env.half_width = real(v)?,
            "env.dof" => self.env.dof = real(v)?,
            "env.reward" => self.env.reward = v.parse()?,
            "env.sigma" => self.env.sigma = parse_real(v, false)?,
            "hard.variant" => self.hard.variant = v.parse()?,
            "hard.alpha" => self.hard.alpha = real(v)?,
            "hard.c_alpha" => self.hard.c_alpha = real(v)?,
            "hard.beta" => self.hard.beta = real(v)?,
            "hard.c_beta" => self.hard.c_beta = real(v)?,
            "hard.seed" => self.hard.seed = parse_u64(v)?,
            "data.images" => self.data.images = Some(PathBuf::from(v)),
            "data.labels" => self.data.labels = Some(PathBuf::from(v)),
            "data.limit" => self.data.limit = parse_positive(v)?,
            "policy.kind" => self.policy.kind = v.parse()?,
            "policy.k" => self.policy.k = Some(parse_positive(v)?),
            "policy.alpha" => self.policy.alpha = Some(real(v)?),
            "policy.L" => self.policy.lipschitz = Some(real(v)?),
            "policy.sigma" => self.policy.sigma = Some(parse_real(v, false)?),
            "policy.conf_scale" => self.policy.conf_scale = real(v)?,
            "policy.bins" => self.policy.bins = parse_list(v, parse_positive)?,
            "policy.clip" => self.policy.clip = real(v)?,
            "policy.width_scale" => self.policy.width_scale = real(v)?,
            "policy.max_depth" => {
                self.policy.max_depth = v
                    .parse()
                    .map_err(|_| format!("expected a nonnegative integer, got `{v}`"))?
            }
            "policy.abse_conf" => self.policy.abse_conf = real(v)?,
            "policy.split_scale" => self.policy.split_scale = real(v)?,
            "sweep.horizons" => self.sweep.horizons = parse_list(v, parse_positive)?,
            "probe.kind" => self.probe.kind = v.parse()?,
            "probe.samples" => self.probe.samples = parse_positive(v)?,
            "probe.action" => {
                self.probe.action = v
                    .parse()
                    .map_err(|_| format!("expected a nonnegative integer, got `{v}`"))?
            }
            "probe.grid" => self.probe.grid = Some(parse_list(v, real)?),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn cross_checks(&self, errs: &mut Vec<String>) {
        if self.env.kind == EnvKind::Hard && self.env.dim > 6 {
            errs.push(format!("env.dim: hard instances support dim <= 6, got {}", self.env.dim));
        }
        if self.env.kind == EnvKind::Hard && self.hard.alpha > self.env.dim as f64 {
            errs.push(format!(
                "hard.alpha: must not exceed env.dim ({}), got {}",
                self.env.dim, self.hard.alpha
            ));
        }
        if self.env.kind == EnvKind::Hard && self.run.horizon < 2 {
            errs.push("run.T: hard instances need T >= 2".into());
        }
        if self.sweep.horizons.windows(2).any(|w| w[0] >= w[1]) {
            errs.push("sweep.horizons: must be strictly increasing".into());
        }
        if let Some(g) = &self.probe.grid {
            if g.windows(2).any(|w| w[0] >= w[1]) {
                errs.push("probe.grid: must be strictly increasing".into());
            }
        }
        if self.probe.samples < crate::env::probe::MIN_PROBE_SAMPLES {
            errs.push(format!(
                "probe.samples: must be at least {}, got {}",
                crate::env::probe::MIN_PROBE_SAMPLES,
                self.probe.samples
            ));
        }
        if self.policy.bins.iter().any(|&b| (b as f64).powi(self.env.dim as i32) > (1u64 << 24) as f64)
            && self.policy.kind == PolicyKind::Ucbogram
        {
            errs.push("policy.bins: bins^dim exceeds 2^24 cells".into());
        }
    }

    /// Fills `policy.k`, `policy.L` and `policy.sigma` from the other fields.
    ///
    /// `data_dim` is the context dimension of a loaded image set; it replaces
    /// `env.dim` for the classification environment.
    pub fn resolve(&self, data_dim: Option<usize>) -> Self {
        let mut c = self.clone();
        if c.env.kind == EnvKind::Mnist {
            if let Some(d) = data_dim {
                c.env.dim = d;
            }
            c.env.sigma = 0.0;
        }
        if c.policy.kind == PolicyKind::FixedKnn && c.policy.k.is_none() {
            c.policy.k = Some(match c.policy.alpha {
                Some(alpha) => margin_fixed_k(c.run.horizon, alpha),
                None => default_fixed_k(c.run.horizon, c.env.dim),
            });
        }
        if c.policy.lipschitz.is_none() {
            c.policy.lipschitz = Some(match c.env.kind {
                EnvKind::Synthetic => (c.env.dim as f64).sqrt(),
                EnvKind::Hard | EnvKind::Mnist => 1.0,
            });
        }
        if c.policy.sigma.is_none() {
            c.policy.sigma = Some(c.env.sigma);
        }
        c
    }

    /// Same configuration with a different horizon and an unresolved `k`
    /// when the original `k` was a default.
    pub fn with_horizon(&self, horizon: usize, k_was_default: bool) -> Self {
        let mut c = self.clone();
        c.run.horizon = horizon;
        if k_was_default {
            c.policy.k = None;
        }
        c
    }

    /// `key = value` lines of every field, in a fixed order.
    pub fn to_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut kv = |k: &str, v: String| out.push(format!("{k} = {v}"));
        kv("run.T", self.run.horizon.to_string());
        kv("run.trials", self.run.trials.to_string());
        kv("run.seed", self.run.seed.to_string());
        kv("env.kind", self.env.kind.to_string());
        kv("env.dim", self.env.dim.to_string());
        kv("env.distribution", self.env.distribution.to_string());
        kv("env.half_width", self.env.half_width.to_string());
        kv("env.dof", self.env.dof.to_string());
        kv("env.reward", self.env.reward.to_string());
        kv("env.sigma", self.env.sigma.to_string());
        kv("hard.variant", self.hard.variant.to_string());
        kv("hard.alpha", self.hard.alpha.to_string());
        kv("hard.c_alpha", self.hard.c_alpha.to_string());
        kv("hard.beta", self.hard.beta.to_string());
        kv("hard.c_beta", self.hard.c_beta.to_string());
        kv("hard.seed", self.hard.seed.to_string());
        if let Some(p) = &self.data.images {
            kv("data.images", p.display().to_string());
        }
        if let Some(p) = &self.data.labels {
            kv("data.labels", p.display().to_string());
        }
        kv("data.limit", self.data.limit.to_string());
        kv("policy.kind", self.policy.kind.to_string());
        if let Some(k) = self.policy.k {
            kv("policy.k", k.to_string());
        }
        if let Some(a) = self.policy.alpha {
            kv("policy.alpha", a.to_string());
        }
        if let Some(l) = self.policy.lipschitz {
            kv("policy.L", l.to_string());
        }
        if let Some(s) = self.policy.sigma {
            kv("policy.sigma", s.to_string());
        }
        kv("policy.conf_scale", self.policy.conf_scale.to_string());
        kv("policy.bins", join(&self.policy.bins));
        kv("policy.clip", self.policy.clip.to_string());
        kv("policy.width_scale", self.policy.width_scale.to_string());
        kv("policy.max_depth", self.policy.max_depth.to_string());
        kv("policy.abse_conf", self.policy.abse_conf.to_string());
        kv("policy.split_scale", self.policy.split_scale.to_string());
        kv("sweep.horizons", join(&self.sweep.horizons));
        kv("probe.kind", self.probe.kind.to_string());
        kv("probe.samples", self.probe.samples.to_string());
        kv("probe.action", self.probe.action.to_string());
        if let Some(g) = &self.probe.grid {
            kv("probe.grid", join(g));
        }
        out
    }

    /// Lines written at the top of every output file.
    pub fn header(&self) -> String {
        let mut s = String::new();
        for line in self.to_lines() {
            s.push_str(HEADER_PREFIX);
            s.push_str(&line);
            s.push('\n');
        }
        s.push_str(&format!("# seed: {}\n", self.run.seed));
        s.push_str(&format!("# digest: {}\n", self.digest()));
        s
    }

    /// SHA-256 of the `key = value` lines, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for line in self.to_lines() {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses a configuration file and checks the keys `command` needs.
pub fn parse_config(text: &str, command: Command) -> Result<ExperimentConfig, ConfigErrors> {
    let mut cfg = ExperimentConfig::default();
    let mut errs = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = n + 1;
        let Some((key, value)) = line.split_once('=') else {
            errs.push(format!("line {lineno}: expected `section.key = value`, got `{line}`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            errs.push(format!("line {lineno}: {key}: duplicate key"));
            continue;
        }
        if let Err(e) = cfg.set(key, value) {
            errs.push(format!("line {lineno}: {key}: {e}"));
        }
    }
    for key in command.required() {
        if !seen.contains(*key) {
            errs.push(format!("{key}: missing required key"));
        }
    }
    if command == Command::Mnist {
        cfg.env.kind = EnvKind::Mnist;
    } else if cfg.env.kind == EnvKind::Mnist {
        errs.push("env.kind: mnist is only available through the mnist command".into());
    }
    cfg.cross_checks(&mut errs);
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errs))
    }
}

/// Reads the `# config:` lines of an output file back into a configuration.
pub fn parse_header(text: &str, command: Command) -> Result<ExperimentConfig, ConfigErrors> {
    let body: String = text
        .lines()
        .filter_map(|l| l.strip_prefix(HEADER_PREFIX))
        .map(|l| format!("{l}\n"))
        .collect();
    parse_config(&body, command)
}
