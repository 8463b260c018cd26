//! Seeded synthetic knowledge graphs with learnable structure.
//!
//! Entities are split into clusters and every relation maps each cluster to
//! one target cluster, so tails are predictable up to the cluster.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{GraphSplits, KgError, Triple};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub entities: usize,
    pub relations: usize,
    pub clusters: usize,
    /// Chance that a given (head, relation) pair has outgoing edges.
    pub edge_probability: f64,
    /// Largest number of tails per (head, relation) pair.
    pub max_tails: usize,
    /// Chance that a tail ignores the cluster map and is drawn uniformly.
    pub noise: f64,
    /// Fractions of edges held out for validation and test.
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// 200 entities, 10 relations: the smoke-test graph.
    pub fn smoke(seed: u64) -> Self {
        Self {
            entities: 200,
            relations: 10,
            clusters: 10,
            edge_probability: 0.5,
            max_tails: 3,
            noise: 0.05,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed,
        }
    }

    pub fn tiny(seed: u64) -> Self {
        Self { entities: 50, relations: 4, clusters: 5, ..Self::smoke(seed) }
    }
}

/// Builds the cumulative splits described by `cfg`.
pub fn generate(cfg: &SyntheticConfig) -> Result<GraphSplits, KgError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let clusters = cfg.clusters.clamp(1, cfg.entities.max(1));
    let mut order: Vec<usize> = (0..cfg.entities).collect();
    order.shuffle(&mut rng);
    let mut members = vec![Vec::new(); clusters];
    let mut cluster_of = vec![0; cfg.entities];
    for (i, &e) in order.iter().enumerate() {
        cluster_of[e] = i % clusters;
        members[i % clusters].push(e);
    }
    let maps: Vec<Vec<usize>> = (0..cfg.relations).map(|_| (0..clusters).map(|_| rng.gen_range(0..clusters)).collect()).collect();

    let mut edges = BTreeSet::new();
    for h in 0..cfg.entities {
        for (r, map) in maps.iter().enumerate() {
            if !rng.gen_bool(cfg.edge_probability) {
                continue;
            }
            let n = rng.gen_range(1..=cfg.max_tails.max(1));
            for _ in 0..n {
                let t = if rng.gen_bool(cfg.noise) {
                    rng.gen_range(0..cfg.entities)
                } else {
                    *members[map[cluster_of[h]]].choose(&mut rng).expect("clusters are non-empty")
                };
                edges.insert(Triple::new(h, r, t));
            }
        }
    }
    let mut edges: Vec<Triple> = edges.into_iter().collect();
    edges.shuffle(&mut rng);
    let n_test = (edges.len() as f64 * cfg.test_fraction).round() as usize;
    let n_valid = (edges.len() as f64 * cfg.valid_fraction).round() as usize;
    let n_train = edges.len() - n_test - n_valid;
    let (train, rest) = edges.split_at(n_train);
    let (valid, test) = rest.split_at(n_valid);
    GraphSplits::from_edges(cfg.entities, cfg.relations, train, valid, test)
}
