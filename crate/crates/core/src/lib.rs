//! Nearest-neighbor UCB policies for nonparametric contextual bandits.
//!
//! [`policy::KnnUcb`] scores each action at a context by averaging the rewards
//! of its nearest past samples and adding a confidence bonus. The number of
//! neighbors is either fixed or chosen per query from the local sample density.
//! The rest of the crate builds and runs experiments around it:
//!
//! - [`knn_store`]: per-action sample stores with exact nearest-neighbor queries
//! - [`env`](mod@env): context distributions, reward pairs, lower-bound instances and probes
//! - [`dataset`]: IDX image files and the classification bandit built on them
//! - [`simulate`]: seeded, thread-count independent trial runner and aggregation
//! - [`config`], [`experiment`], [`cli`]: the `knn-ucb` command-line tool

// Parameter checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod env;
pub mod experiment;
pub mod knn_store;
pub mod policy;
pub mod simulate;
pub mod stats;
