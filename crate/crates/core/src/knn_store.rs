//! Per-action sample storage with exact k-nearest-neighbor queries.
//!
//! Every action keeps its own [`ActionStore`]: an insertion-ordered list of
//! `(context, reward)` pairs. Queries are exact under the Euclidean norm.
//! Equal distances are ordered by insertion index so that results are
//! reproducible bit-for-bit.
//!
//! The production path ([`ActionStore::knn`]) is a linear scan followed by a
//! partial selection. [`ActionStore::brute_knn`] is a full scan with a stable
//! sort and is kept as the reference the tests compare against.

use std::cmp::Ordering;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnnError {
    #[error("dimension mismatch: store has dim {expected}, point has dim {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("nearest-neighbor query on an empty store")]
    EmptyStore,
    #[error("store dimension must be positive")]
    ZeroDimension,
}

/// One entry of a neighbor query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborEntry {
    /// Insertion index of the sample in its store (0-based).
    pub sample_index: usize,
    /// Euclidean distance from the query.
    pub distance: f64,
    pub reward: f64,
}

/// Insertion-ordered samples observed under one action.
#[derive(Debug, Clone)]
pub struct ActionStore {
    dim: usize,
    // Flat row-major storage, `dim` values per sample.
    coords: Vec<f64>,
    rewards: Vec<f64>,
}

/// Euclidean distance between two points of equal length.
#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl ActionStore {
    pub fn new(dim: usize) -> Result<Self, KnnError> {
        if dim == 0 {
            return Err(KnnError::ZeroDimension);
        }
        Ok(Self {
            dim,
            coords: Vec::new(),
            rewards: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Context of the sample with the given insertion index.
    pub fn point(&self, index: usize) -> &[f64] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn reward(&self, index: usize) -> f64 {
        self.rewards[index]
    }

    /// Appends a sample; it receives the next insertion index, which is returned.
    pub fn insert(&mut self, x: &[f64], y: f64) -> Result<usize, KnnError> {
        self.check_dim(x)?;
        self.coords.extend_from_slice(x);
        self.rewards.push(y);
        Ok(self.rewards.len() - 1)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), KnnError> {
        if x.len() != self.dim {
            return Err(KnnError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_query(&self, query: &[f64]) -> Result<(), KnnError> {
        self.check_dim(query)?;
        if self.is_empty() {
            return Err(KnnError::EmptyStore);
        }
        Ok(())
    }

    fn all_distances(&self, query: &[f64]) -> Vec<(f64, usize)> {
        self.coords
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, p)| (euclidean(p, query), i))
            .collect()
    }

    /// The `min(k, len)` nearest samples, closest first.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<NeighborEntry>, KnnError> {
        self.check_query(query)?;
        let mut dists = self.all_distances(query);
        let k = k.min(dists.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, by_distance_then_index);
            dists.truncate(k);
        }
        dists.sort_unstable_by(by_distance_then_index);
        Ok(self.entries(&dists))
    }

    /// Distances to the `min(k_max, len)` nearest samples, nondecreasing.
    /// Element `j - 1` is the distance to the j-th nearest neighbor.
    pub fn sorted_distances(&self, query: &[f64], k_max: usize) -> Result<Vec<f64>, KnnError> {
        Ok(self
            .knn(query, k_max)?
            .into_iter()
            .map(|e| e.distance)
            .collect())
    }

    /// Reference implementation of [`knn`](Self::knn): full scan and a stable
    /// sort on distance, which leaves equal distances in insertion order.
    pub fn brute_knn(&self, query: &[f64], k: usize) -> Result<Vec<NeighborEntry>, KnnError> {
        self.check_query(query)?;
        let mut dists: Vec<(f64, usize)> = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            dists.push((euclidean(self.point(i), query), i));
        }
        dists.sort_by(|a, b| a.0.total_cmp(&b.0));
        dists.truncate(k);
        Ok(self.entries(&dists))
    }

    fn entries(&self, dists: &[(f64, usize)]) -> Vec<NeighborEntry> {
        dists
            .iter()
            .map(|&(distance, sample_index)| NeighborEntry {
                sample_index,
                distance,
                reward: self.rewards[sample_index],
            })
            .collect()
    }
}
