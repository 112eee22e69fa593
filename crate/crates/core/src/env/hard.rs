//! Lower-bound ("hard") instances built from disjoint balls.
//!
//! Two actions. Action 0 has mean `v_j * h` on margin ball `j` (`v_j` a
//! random sign) and 0 elsewhere; action 1 always has mean 0. A policy must
//! learn the sign of every margin ball separately, and each wrong pick in a
//! margin ball costs `h`.
//!
//! * Bounded: `B` balls of radius `h = T^(-1/(d+2))` carry all the mass with
//!   a constant density; the first `K = floor(C_alpha h^(alpha-d) / v_d)` are
//!   margin balls. `B = ceil(1 / (v_d h^d))`, and the density is
//!   `1 / (B v_d h^d)` so that the pdf integrates to exactly one.
//! * Tailed: a core ball at the origin with density 1 holds most of the mass
//!   and `K` tail balls of density `m = T^(-alpha/(alpha+beta(d+2)))` and
//!   radius `h = (T m)^(-1/(d+2))` hold the rest. Every tail ball is a
//!   margin ball. `K = floor(h^(alpha-d) / m)` is shrunk until the margin
//!   and tail constraints hold.
//!
//! Ball centers sit on the lattice `3h Z^d`, nearest the origin first, which
//! keeps balls of radius `h` at least `h` apart.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HardInstanceError {
    #[error("infeasible hard instance: {0}")]
    Infeasible(String),
    #[error("invalid hard-instance parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HardVariant {
    Bounded,
    Tailed,
}

/// Volume of the unit ball in `dim` dimensions.
pub fn unit_ball_volume(dim: usize) -> f64 {
    let d = dim as f64;
    (0.5 * d * PI.ln() - ln_gamma(0.5 * d + 1.0)).exp()
}

/// One constraint of the construction, evaluated as `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

impl ConstraintCheck {
    fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            satisfied: lhs <= rhs * (1.0 + 1e-12),
        }
    }

    fn lt(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            satisfied: lhs < rhs,
        }
    }
}

/// Inputs to [`HardInstance::build`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceParams {
    pub horizon: usize,
    pub dim: usize,
    pub alpha: f64,
    pub c_alpha: f64,
    pub beta: f64,
    pub c_beta: f64,
    pub variant: HardVariant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardInstance {
    pub variant: HardVariant,
    pub dim: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub c_alpha: f64,
    pub beta: f64,
    pub c_beta: f64,
    /// Radius `h` of the small balls; also the reward magnitude.
    pub radius: f64,
    /// Number of margin balls `K`.
    pub num_margin_balls: usize,
    /// Number of small balls `B` (margin balls come first).
    pub num_balls: usize,
    /// Density on each small ball.
    pub ball_density: f64,
    /// Tail density `m` (1 for the bounded variant).
    pub tail_mass: f64,
    /// Radius of the core ball at the origin (tailed only, else 0).
    pub core_radius: f64,
    /// Signs `v_j` of the margin balls, each -1 or +1.
    pub signs: Vec<i8>,
    pub centers: Vec<Vec<f64>>,
    #[serde(skip)]
    lattice: HashMap<Vec<i64>, usize>,
}

fn ceil_guarded(v: f64) -> usize {
    (v * (1.0 - 1e-12)).ceil().max(0.0) as usize
}

fn floor_guarded(v: f64) -> usize {
    (v * (1.0 + 1e-12)).floor().max(0.0) as usize
}

/// First `count` points of `spacing * Z^d` ordered by distance from the origin
/// (ties lexicographic), skipping points closer than `min_norm`.
fn lattice_centers(dim: usize, spacing: f64, count: usize, min_norm: f64) -> Vec<Vec<i64>> {
    let mut r: i64 = 0;
    loop {
        let side = (2 * r + 1) as usize;
        let total = side.checked_pow(dim as u32).expect("lattice too large");
        let mut pts: Vec<(i64, Vec<i64>)> = Vec::new();
        for idx in 0..total {
            let mut rem = idx;
            let mut z = Vec::with_capacity(dim);
            for _ in 0..dim {
                z.push((rem % side) as i64 - r);
                rem /= side;
            }
            z.reverse();
            let n2: i64 = z.iter().map(|v| v * v).sum();
            if n2 <= r * r && (n2 as f64).sqrt() * spacing >= min_norm {
                pts.push((n2, z));
            }
        }
        if pts.len() >= count {
            pts.sort();
            return pts.into_iter().take(count).map(|(_, z)| z).collect();
        }
        r += 1;
    }
}

impl HardInstance {
    /// Builds an instance from the horizon and the margin/tail exponents.
    pub fn build<R: Rng + ?Sized>(
        params: &HardInstanceParams,
        rng: &mut R,
    ) -> Result<Self, HardInstanceError> {
        let p = params;
        let mut bad = Vec::new();
        if p.dim == 0 || p.dim > 6 {
            bad.push(format!("dim must be in 1..=6, got {}", p.dim));
        }
        if p.horizon < 2 {
            bad.push(format!("horizon must be >= 2, got {}", p.horizon));
        }
        if !(p.alpha > 0.0 && p.alpha <= p.dim as f64) {
            bad.push(format!("alpha must be in (0, dim], got {}", p.alpha));
        }
        if !(p.c_alpha > 0.0) {
            bad.push(format!("c_alpha must be > 0, got {}", p.c_alpha));
        }
        if p.variant == HardVariant::Tailed && !(p.beta > 0.0 && p.c_beta > 0.0) {
            bad.push(format!(
                "beta and c_beta must be > 0, got {} and {}",
                p.beta, p.c_beta
            ));
        }
        if !bad.is_empty() {
            return Err(HardInstanceError::InvalidParameters(bad.join("; ")));
        }
        let d = p.dim as f64;
        let t = p.horizon as f64;
        match p.variant {
            HardVariant::Bounded => {
                let h = t.powf(-1.0 / (d + 2.0));
                Self::bounded_from_radius(p, h, None, rng)
            }
            HardVariant::Tailed => {
                let m = t.powf(-p.alpha / (p.alpha + p.beta * (d + 2.0)));
                let h = (t * m).powf(-1.0 / (d + 2.0));
                Self::tailed_from_parts(p, h, m, rng)
            }
        }
    }

    /// Bounded construction with an explicit radius, optionally forcing `B`.
    pub fn bounded_from_radius<R: Rng + ?Sized>(
        params: &HardInstanceParams,
        h: f64,
        forced_balls: Option<usize>,
        rng: &mut R,
    ) -> Result<Self, HardInstanceError> {
        let d = params.dim as f64;
        let vd = unit_ball_volume(params.dim);
        let vol = vd * h.powf(d);
        let b = forced_balls.unwrap_or_else(|| ceil_guarded(1.0 / vol)).max(1);
        let density = 1.0 / (b as f64 * vol);
        let mut k = floor_guarded(params.c_alpha * h.powf(params.alpha - d) / vd).min(b);
        while k > 0 && k as f64 * density * vol > params.c_alpha * h.powf(params.alpha) {
            k -= 1;
        }
        if k == 0 {
            return Err(HardInstanceError::Infeasible(format!(
                "margin constraint K v_d h^d <= C_alpha h^alpha admits no K >= 1 (h = {h})"
            )));
        }
        let coords = lattice_centers(params.dim, 3.0 * h, b, 0.0);
        let inst = Self::assemble(params, h, k, b, density, 1.0, 0.0, coords, rng);
        inst.require_feasible()?;
        Ok(inst)
    }

    /// Tailed construction with explicit radius `h` and tail density `m`.
    pub fn tailed_from_parts<R: Rng + ?Sized>(
        params: &HardInstanceParams,
        h: f64,
        m: f64,
        rng: &mut R,
    ) -> Result<Self, HardInstanceError> {
        let d = params.dim as f64;
        let vd = unit_ball_volume(params.dim);
        let vol = vd * h.powf(d);
        let mut k = floor_guarded(h.powf(params.alpha - d) / m);
        let margin_cap = params.c_alpha * h.powf(params.alpha);
        let tail_cap = params.c_beta * m.powf(params.beta);
        while k > 0 {
            let mass = m * k as f64 * vol;
            if mass <= margin_cap && mass <= tail_cap && mass < 1.0 {
                break;
            }
            k -= 1;
        }
        if k == 0 {
            return Err(HardInstanceError::Infeasible(format!(
                "margin/tail constraints admit no K >= 1 (h = {h}, m = {m})"
            )));
        }
        let tail = m * k as f64 * vol;
        let core_radius = ((1.0 - tail) / vd).powf(1.0 / d);
        let coords = lattice_centers(params.dim, 3.0 * h, k, core_radius + 2.0 * h);
        let inst = Self::assemble(params, h, k, k, m, m, core_radius, coords, rng);
        inst.require_feasible()?;
        Ok(inst)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble<R: Rng + ?Sized>(
        params: &HardInstanceParams,
        h: f64,
        k: usize,
        b: usize,
        density: f64,
        tail_mass: f64,
        core_radius: f64,
        coords: Vec<Vec<i64>>,
        rng: &mut R,
    ) -> Self {
        let spacing = 3.0 * h;
        let centers = coords
            .iter()
            .map(|z| z.iter().map(|&v| v as f64 * spacing).collect())
            .collect();
        let lattice = coords.into_iter().enumerate().map(|(i, z)| (z, i)).collect();
        let signs = (0..k)
            .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
            .collect();
        Self {
            variant: params.variant,
            dim: params.dim,
            horizon: params.horizon,
            alpha: params.alpha,
            c_alpha: params.c_alpha,
            beta: params.beta,
            c_beta: params.c_beta,
            radius: h,
            num_margin_balls: k,
            num_balls: b,
            ball_density: density,
            tail_mass,
            core_radius,
            signs,
            centers,
            lattice,
        }
    }

    /// Rebuilds the lattice lookup after deserialization.
    pub fn reindex(&mut self) {
        let spacing = 3.0 * self.radius;
        self.lattice = self
            .centers
            .iter()
            .enumerate()
            .map(|(i, c)| (c.iter().map(|v| (v / spacing).round() as i64).collect(), i))
            .collect();
    }

    fn require_feasible(&self) -> Result<(), HardInstanceError> {
        match self.constraints().into_iter().find(|c| !c.satisfied) {
            None => Ok(()),
            Some(c) => Err(HardInstanceError::Infeasible(format!(
                "{} violated: {} > {}",
                c.name, c.lhs, c.rhs
            ))),
        }
    }

    fn ball_volume(&self) -> f64 {
        unit_ball_volume(self.dim) * self.radius.powi(self.dim as i32)
    }

    /// Probability mass of all margin balls, which is `P(0 < gap < u)` for `u > h`.
    pub fn margin_mass(&self) -> f64 {
        self.num_margin_balls as f64 * self.ball_density * self.ball_volume()
    }

    /// Evaluates every constraint of the construction.
    pub fn constraints(&self) -> Vec<ConstraintCheck> {
        let vol = self.ball_volume();
        let h = self.radius;
        let mut out = vec![ConstraintCheck::le("K >= 1", 1.0, self.num_margin_balls as f64)];
        match self.variant {
            HardVariant::Bounded => {
                let raw = self.num_balls as f64 * vol;
                out.push(ConstraintCheck::lt(
                    "normalization |B v_d h^d - 1| < v_d h^d",
                    (raw - 1.0).abs(),
                    vol,
                ));
                out.push(ConstraintCheck::le(
                    "margin K c v_d h^d <= C_alpha h^alpha",
                    self.margin_mass(),
                    self.c_alpha * h.powf(self.alpha),
                ));
            }
            HardVariant::Tailed => {
                let mass = self.margin_mass();
                out.push(ConstraintCheck::le(
                    "margin m K v_d h^d <= C_alpha h^alpha",
                    mass,
                    self.c_alpha * h.powf(self.alpha),
                ));
                out.push(ConstraintCheck::le(
                    "tail m K v_d h^d <= C_beta m^beta",
                    mass,
                    self.c_beta * self.tail_mass.powf(self.beta),
                ));
                out.push(ConstraintCheck::lt("tail density m < 1", self.tail_mass, 1.0));
                let nearest = self
                    .centers
                    .iter()
                    .map(|c| norm(c))
                    .fold(f64::INFINITY, f64::min);
                out.push(ConstraintCheck::lt(
                    "core disjoint r_0 + h < min |c_j|",
                    self.core_radius + h,
                    nearest,
                ));
            }
        }
        let total = self.core_mass() + self.num_balls as f64 * self.ball_density * vol;
        out.push(ConstraintCheck::le("total mass = 1", (total - 1.0).abs(), 1e-9));
        out.push(ConstraintCheck::lt(
            "balls disjoint 2h < min |c_i - c_j|",
            2.0 * h,
            self.min_center_separation(),
        ));
        out
    }

    pub fn all_constraints_hold(&self) -> bool {
        self.constraints().iter().all(|c| c.satisfied)
    }

    fn core_mass(&self) -> f64 {
        match self.variant {
            HardVariant::Bounded => 0.0,
            HardVariant::Tailed => {
                unit_ball_volume(self.dim) * self.core_radius.powi(self.dim as i32)
            }
        }
    }

    /// Smallest distance between two centers. Centers are distinct points of
    /// the lattice `3h Z^d`, so it is `3h` whenever that holds.
    fn min_center_separation(&self) -> f64 {
        let spacing = 3.0 * self.radius;
        let on_lattice = self.centers.iter().all(|c| {
            c.iter()
                .all(|v| (v - (v / spacing).round() * spacing).abs() <= 1e-9 * spacing)
        });
        if on_lattice && self.lattice.len() == self.centers.len() {
            return if self.centers.len() > 1 { spacing } else { f64::INFINITY };
        }
        let mut best = f64::INFINITY;
        for i in 0..self.centers.len() {
            for j in i + 1..self.centers.len() {
                best = best.min(crate::knn_store::euclidean(&self.centers[i], &self.centers[j]));
            }
        }
        best
    }

    /// Index of the small ball containing `x`.
    fn ball_of(&self, x: &[f64]) -> Option<usize> {
        let spacing = 3.0 * self.radius;
        let z: Vec<i64> = x.iter().map(|v| (v / spacing).round() as i64).collect();
        let &j = self.lattice.get(&z)?;
        (crate::knn_store::euclidean(&self.centers[j], x) <= self.radius).then_some(j)
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        if self.variant == HardVariant::Tailed && norm(x) <= self.core_radius {
            return 1.0;
        }
        match self.ball_of(x) {
            Some(_) => self.ball_density,
            None => 0.0,
        }
    }

    pub fn peak_density(&self) -> f64 {
        match self.variant {
            HardVariant::Bounded => self.ball_density,
            HardVariant::Tailed => 1.0,
        }
    }

    /// Mean reward of action 0: `v_j h` on margin ball `j`, else 0.
    pub fn eta(&self, x: &[f64]) -> f64 {
        match self.ball_of(x) {
            Some(j) if j < self.num_margin_balls => f64::from(self.signs[j]) * self.radius,
            _ => 0.0,
        }
    }

    /// Half-width of an axis-aligned box containing every ball.
    pub fn bounding_half_width(&self) -> f64 {
        let far = self
            .centers
            .iter()
            .flat_map(|c| c.iter().map(|v| v.abs()))
            .fold(0.0, f64::max);
        (far + self.radius).max(self.core_radius)
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (center, r) = match self.variant {
            HardVariant::Tailed if rng.random::<f64>() < self.core_mass() => {
                (vec![0.0; self.dim], self.core_radius)
            }
            _ => {
                let j = rng.random_range(0..self.num_balls);
                (self.centers[j].clone(), self.radius)
            }
        };
        let dir: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&dir).max(f64::MIN_POSITIVE);
        let u: f64 = rng.random();
        let rad = r * u.powf(1.0 / self.dim as f64);
        center
            .iter()
            .zip(&dir)
            .map(|(c, v)| c + rad * v / n)
            .collect()
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
