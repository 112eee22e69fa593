//! UCBogram baseline: a fixed regular partition of a clipped box with an
//! independent UCB1 index per cell.

use super::{Policy, PolicyError, Protocol};

#[derive(Debug, Clone, PartialEq)]
pub struct UcbogramConfig {
    pub num_actions: usize,
    pub dim: usize,
    /// Cells per coordinate.
    pub bins: usize,
    /// Contexts are clipped coordinate-wise to `[-clip, clip]`.
    pub clip: f64,
    /// Multiplier on the UCB1 width `sqrt(2 ln n / n_a)`.
    pub width_scale: f64,
}

impl UcbogramConfig {
    pub fn new(num_actions: usize, dim: usize, bins: usize) -> Self {
        Self {
            num_actions,
            dim,
            bins,
            clip: 3.0,
            width_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ucbogram {
    cfg: UcbogramConfig,
    // Indexed by cell * num_actions + action.
    counts: Vec<u64>,
    sums: Vec<f64>,
    protocol: Protocol,
}

impl Ucbogram {
    pub fn new(cfg: UcbogramConfig) -> Result<Self, PolicyError> {
        if cfg.num_actions == 0 || cfg.dim == 0 || cfg.bins == 0 {
            return Err(PolicyError::InvalidConfig(
                "ucbogram needs num_actions, dim and bins >= 1".into(),
            ));
        }
        if !(cfg.clip > 0.0 && cfg.clip.is_finite()) || !(cfg.width_scale >= 0.0) {
            return Err(PolicyError::InvalidConfig(
                "ucbogram clip must be > 0 and width_scale >= 0".into(),
            ));
        }
        let cells = (cfg.bins as u64)
            .checked_pow(cfg.dim as u32)
            .filter(|&c| c <= 1 << 24)
            .ok_or_else(|| {
                PolicyError::InvalidConfig(format!(
                    "{}^{} cells is too many for a dense histogram",
                    cfg.bins, cfg.dim
                ))
            })? as usize;
        Ok(Self {
            counts: vec![0; cells * cfg.num_actions],
            sums: vec![0.0; cells * cfg.num_actions],
            cfg,
            protocol: Protocol::default(),
        })
    }

    /// Cell index along one coordinate after clipping.
    pub fn coordinate_bin(&self, v: f64) -> usize {
        let r = self.cfg.clip;
        let c = v.clamp(-r, r);
        let b = ((c + r) / (2.0 * r) * self.cfg.bins as f64).floor() as usize;
        b.min(self.cfg.bins - 1)
    }

    /// Row-major cell index of a context.
    pub fn cell(&self, x: &[f64]) -> usize {
        x.iter()
            .fold(0, |acc, &v| acc * self.cfg.bins + self.coordinate_bin(v))
    }

    pub fn pulls(&self, cell: usize, action: usize) -> u64 {
        self.counts[cell * self.cfg.num_actions + action]
    }

    fn choose(&self, cell: usize) -> usize {
        let k = self.cfg.num_actions;
        let counts = &self.counts[cell * k..(cell + 1) * k];
        let sums = &self.sums[cell * k..(cell + 1) * k];
        if let Some(a) = counts.iter().position(|&c| c == 0) {
            return a;
        }
        let total: u64 = counts.iter().sum();
        let ln_n = (total as f64).ln();
        let mut best = 0;
        let mut best_idx = f64::NEG_INFINITY;
        for a in 0..k {
            let n = counts[a] as f64;
            let idx = sums[a] / n + self.cfg.width_scale * (2.0 * ln_n / n).sqrt();
            if idx > best_idx {
                best = a;
                best_idx = idx;
            }
        }
        best
    }
}

impl Policy for Ucbogram {
    fn name(&self) -> &'static str {
        "ucbogram"
    }

    fn num_actions(&self) -> usize {
        self.cfg.num_actions
    }

    fn act(&mut self, x: &[f64]) -> Result<usize, PolicyError> {
        self.protocol.begin()?;
        if x.len() != self.cfg.dim {
            return Err(PolicyError::Protocol(format!(
                "context has dim {}, policy expects {}",
                x.len(),
                self.cfg.dim
            )));
        }
        let a = self.choose(self.cell(x));
        self.protocol.record(x, a);
        Ok(a)
    }

    fn observe(&mut self, x: &[f64], action: usize, reward: f64) -> Result<(), PolicyError> {
        self.protocol.finish(x, action)?;
        let i = self.cell(x) * self.cfg.num_actions + action;
        self.counts[i] += 1;
        self.sums[i] += reward;
        Ok(())
    }
}
