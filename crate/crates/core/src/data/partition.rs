use log::warn;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed::SeedPath;

/// Assignment of training-set indices to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub shards: Vec<Vec<usize>>,
    /// The Dirichlet draw shared by every class.
    pub proportions: Vec<f64>,
    pub alpha: f64,
    pub seed: u64,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Vec::len).collect()
    }

    /// Git-style content hash: SHA-256 over `"partition <len>\0"` followed by
    /// the canonical JSON of the shards.
    pub fn content_hash(&self) -> String {
        let body = serde_json::to_vec(&self.shards).expect("shards serialize");
        let mut h = Sha256::new();
        h.update(format!("partition {}\0", body.len()).as_bytes());
        h.update(&body);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn dirichlet_draw(alpha: f64, k: usize, seed: SeedPath) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha checked positive");
    let mut rng = seed.rng();
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.into_iter().map(|g| g / total).collect()
    } else {
        // every gamma draw underflowed: the limit of Dir(α→0) is a vertex
        let mut p = vec![0.0; k];
        p[(seed.value() % k as u64) as usize] = 1.0;
        p
    }
}

/// Largest-remainder apportionment of `n` items by `proportions`; ties in the
/// fractional part go to the lower index.
fn apportion(n: usize, proportions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().take(n.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

/// Class-balanced, size-imbalanced split: one proportion vector
/// `p ~ Dir(α·1)` is drawn and applied to every class.
pub fn dirichlet_partition(
    dataset: &Dataset,
    num_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Partition> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("alpha must be positive, got {alpha}")));
    }
    if num_clients == 0 {
        return Err(Error::config("need at least one client"));
    }
    let root = SeedPath::root(seed).with("partition");
    let proportions = dirichlet_draw(alpha, num_clients, root.with("dirichlet"));
    let mut shards = vec![Vec::new(); num_clients];
    for (class, mut idx) in dataset.indices_by_class().into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < num_clients {
            warn!(
                "class {class} has {} samples for {num_clients} clients; some clients get none",
                idx.len()
            );
        }
        idx.shuffle(&mut root.with("class").index(class as u64).rng());
        let counts = apportion(idx.len(), &proportions);
        let mut rest = idx.as_slice();
        for (shard, n) in shards.iter_mut().zip(counts) {
            let (take, tail) = rest.split_at(n);
            shard.extend_from_slice(take);
            rest = tail;
        }
    }
    for s in shards.iter_mut() {
        s.sort_unstable();
    }
    Ok(Partition {
        shards,
        proportions,
        alpha,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    fn labels_only(classes: usize, per_class: usize) -> Dataset {
        let labels: Vec<usize> = (0..classes * per_class).map(|i| i % classes).collect();
        Dataset::new(vec![0.0; labels.len() * 64], labels, classes, 1, 8, 8, Split::Train).unwrap()
    }

    #[test]
    fn single_client_gets_everything() {
        let ds = labels_only(3, 7);
        let p = dirichlet_partition(&ds, 1, 0.85, 4).unwrap();
        assert_eq!(p.shards[0], (0..21).collect::<Vec<_>>());
    }

    #[test]
    fn apportion_is_exact_and_close() {
        let p = [0.5, 0.3, 0.2];
        assert_eq!(apportion(10, &p), vec![5, 3, 2]);
        let c = apportion(7, &p);
        assert_eq!(c.iter().sum::<usize>(), 7);
        for (ci, pi) in c.iter().zip(p) {
            assert!((*ci as f64 - pi * 7.0).abs() < 1.0);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let ds = labels_only(2, 4);
        assert!(dirichlet_partition(&ds, 0, 1.0, 0).is_err());
        assert!(dirichlet_partition(&ds, 3, 0.0, 0).is_err());
        assert!(dirichlet_partition(&ds, 3, -1.0, 0).is_err());
    }

    #[test]
    fn tiny_classes_allowed() {
        let ds = labels_only(2, 3);
        let p = dirichlet_partition(&ds, 10, 0.5, 1).unwrap();
        assert_eq!(p.sizes().iter().sum::<usize>(), 6);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let ds = labels_only(4, 50);
        let a = dirichlet_partition(&ds, 5, 0.85, 1).unwrap();
        let b = dirichlet_partition(&ds, 5, 0.85, 1).unwrap();
        let c = dirichlet_partition(&ds, 5, 0.85, 2).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
        assert_eq!(a.content_hash().len(), 64);
    }
}
