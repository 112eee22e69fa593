//! Adaptively binned successive elimination (ABSE) baseline.
//!
//! The clipped box `[-clip, clip]^d` is the root cell. Inside a cell the
//! surviving arms are pulled round-robin; after every full round an arm is
//! eliminated when its upper confidence limit falls below the best lower
//! limit. When a cell has run its round budget with more than one survivor,
//! it splits into `2^d` children that inherit the survivors and start fresh
//! statistics. Cells at `max_depth` never split.
//!
//! Width after `tau` rounds: `conf * sqrt(2 ln(max(e, T / tau)) / tau)`.
//! Round budget at depth `k`, with normalized side `s = 2^-k`:
//! `ceil(split_scale * ln(max(e, T s^(d+2))) / s^2)`.

use std::collections::HashMap;

use super::{Policy, PolicyError, Protocol};

#[derive(Debug, Clone, PartialEq)]
pub struct AbseConfig {
    pub num_actions: usize,
    pub dim: usize,
    pub horizon: usize,
    pub clip: f64,
    pub max_depth: u32,
    pub conf: f64,
    pub split_scale: f64,
}

impl AbseConfig {
    pub fn new(num_actions: usize, dim: usize, horizon: usize) -> Self {
        Self {
            num_actions,
            dim,
            horizon,
            clip: 3.0,
            max_depth: 4,
            conf: 1.0,
            split_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Cell {
    depth: u32,
    active: Vec<usize>,
    counts: Vec<u64>,
    sums: Vec<f64>,
    next: usize,
    rounds: u64,
    split: bool,
}

impl Cell {
    fn new(depth: u32, active: Vec<usize>, num_actions: usize) -> Self {
        Self {
            depth,
            active,
            counts: vec![0; num_actions],
            sums: vec![0.0; num_actions],
            next: 0,
            rounds: 0,
            split: false,
        }
    }

    fn mean(&self, a: usize) -> f64 {
        self.sums[a] / self.counts[a] as f64
    }
}

type CellKey = (u32, Vec<u64>);

#[derive(Debug, Clone)]
pub struct Abse {
    cfg: AbseConfig,
    cells: HashMap<CellKey, Cell>,
    protocol: Protocol,
}

impl Abse {
    pub fn new(cfg: AbseConfig) -> Result<Self, PolicyError> {
        if cfg.num_actions == 0 || cfg.dim == 0 || cfg.horizon == 0 {
            return Err(PolicyError::InvalidConfig(
                "abse needs num_actions, dim and horizon >= 1".into(),
            ));
        }
        if !(cfg.clip > 0.0 && cfg.clip.is_finite())
            || !(cfg.conf > 0.0)
            || !(cfg.split_scale > 0.0)
            || cfg.max_depth > 40
        {
            return Err(PolicyError::InvalidConfig(
                "abse clip, conf and split_scale must be > 0 and max_depth <= 40".into(),
            ));
        }
        let mut cells = HashMap::new();
        cells.insert(
            (0, vec![0; cfg.dim]),
            Cell::new(0, (0..cfg.num_actions).collect(), cfg.num_actions),
        );
        Ok(Self {
            cfg,
            cells,
            protocol: Protocol::default(),
        })
    }

    /// Confidence width after `rounds` complete rounds.
    pub fn width(&self, rounds: u64) -> f64 {
        let tau = rounds as f64;
        let log = (self.cfg.horizon as f64 / tau).ln().max(1.0);
        self.cfg.conf * (2.0 * log / tau).sqrt()
    }

    /// Rounds a cell at `depth` runs before it may split.
    pub fn round_budget(&self, depth: u32) -> u64 {
        let side = 0.5f64.powi(depth as i32);
        let d = self.cfg.dim as f64;
        let log = (self.cfg.horizon as f64 * side.powf(d + 2.0)).ln().max(1.0);
        (self.cfg.split_scale * log / (side * side)).ceil() as u64
    }

    fn coords_at(&self, x: &[f64], depth: u32) -> Vec<u64> {
        let r = self.cfg.clip;
        let n = 1u64 << depth;
        x.iter()
            .map(|&v| {
                let c = (v.clamp(-r, r) + r) / (2.0 * r);
                ((c * n as f64).floor() as u64).min(n - 1)
            })
            .collect()
    }

    /// Key of the leaf cell containing `x`, creating it if needed.
    fn leaf(&mut self, x: &[f64]) -> CellKey {
        let mut key: CellKey = (0, vec![0; self.cfg.dim]);
        loop {
            let cell = &self.cells[&key];
            if !cell.split {
                return key;
            }
            let inherited = cell.active.clone();
            let depth = key.0 + 1;
            let child = (depth, self.coords_at(x, depth));
            let k = self.cfg.num_actions;
            self.cells
                .entry(child.clone())
                .or_insert_with(|| Cell::new(depth, inherited, k));
            key = child;
        }
    }

    /// Surviving arms in the leaf containing `x`.
    pub fn active_arms(&mut self, x: &[f64]) -> Vec<usize> {
        let key = self.leaf(x);
        self.cells[&key].active.clone()
    }

    /// Depth of the leaf containing `x`.
    pub fn leaf_depth(&mut self, x: &[f64]) -> u32 {
        self.leaf(x).0
    }

    fn end_round(&mut self, key: &CellKey) {
        let width;
        let budget;
        {
            let cell = &self.cells[key];
            width = self.width(cell.rounds + 1);
            budget = self.round_budget(cell.depth);
        }
        let max_depth = self.cfg.max_depth;
        let cell = self.cells.get_mut(key).expect("leaf exists");
        cell.rounds += 1;
        cell.next = 0;
        let best_lower = cell
            .active
            .iter()
            .map(|&a| cell.mean(a) - width)
            .fold(f64::NEG_INFINITY, f64::max);
        let survivors: Vec<usize> = cell
            .active
            .iter()
            .copied()
            .filter(|&a| cell.mean(a) + width >= best_lower)
            .collect();
        cell.active = survivors;
        if cell.active.len() > 1 && cell.rounds >= budget && cell.depth < max_depth {
            cell.split = true;
        }
    }
}

impl Policy for Abse {
    fn name(&self) -> &'static str {
        "abse"
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
        let key = self.leaf(x);
        let cell = &self.cells[&key];
        let a = cell.active[cell.next];
        self.protocol.record(x, a);
        Ok(a)
    }

    fn observe(&mut self, x: &[f64], action: usize, reward: f64) -> Result<(), PolicyError> {
        self.protocol.finish(x, action)?;
        let key = self.leaf(x);
        let cell = self.cells.get_mut(&key).expect("leaf exists");
        cell.counts[action] += 1;
        cell.sums[action] += reward;
        if cell.active.len() == 1 {
            return Ok(());
        }
        cell.next += 1;
        if cell.next == cell.active.len() {
            self.end_round(&key);
        }
        Ok(())
    }
}
