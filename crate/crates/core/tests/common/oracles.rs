//! Brute-force metric and partition checks, one randomized case at a time.

use std::collections::BTreeSet;

use hetfl::attacks::{advantage, auc, tpr_at_fpr};
use hetfl::data::{dirichlet_partition, Dataset, Split};
use hetfl::seed::SeedPath;
use rand::Rng as _;

/// Scores on a coarse grid so ties are common, with both labels present.
pub fn score_case(seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = SeedPath::root(seed).with("scores").rng();
    let n = rng.gen_range(4..60);
    let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..8u8)) / 4.0).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    labels[0] = true;
    labels[1] = false;
    (scores, labels)
}

/// Fraction of (member, non-member) pairs ordered correctly, ties worth half.
pub fn brute_auc(s: &[f64], l: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in (0..s.len()).filter(|&i| l[i]) {
        for j in (0..s.len()).filter(|&j| !l[j]) {
            den += 1.0;
            if s[i] > s[j] {
                num += 1.0;
            } else if s[i] == s[j] {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Best TPR over every threshold taken from the scores.
pub fn brute_tpr(s: &[f64], l: &[bool], target: f64) -> f64 {
    let pos = l.iter().filter(|&&x| x).count() as f64;
    let neg = l.len() as f64 - pos;
    let mut best = 0.0f64;
    for &t in s {
        let tp = (0..s.len()).filter(|&i| l[i] && s[i] >= t).count() as f64;
        let fp = (0..s.len()).filter(|&i| !l[i] && s[i] >= t).count() as f64;
        if fp / neg <= target {
            best = best.max(tp / pos);
        }
    }
    best
}

/// AUC, advantage and TPR@FPR of one random case against enumeration.
pub fn metric_case(seed: u64) -> Result<(), String> {
    let (s, l) = score_case(seed);
    let got = auc(&s, &l).map_err(|e| e.to_string())?;
    let want = brute_auc(&s, &l);
    if got != want {
        return Err(format!("seed {seed}: auc {got} vs {want}"));
    }
    let d: Vec<bool> = s.iter().map(|&x| x >= 1.0).collect();
    let correct = d.iter().zip(&l).filter(|(a, b)| a == b).count() as f64;
    let want = 2.0 * (100.0 * correct / l.len() as f64 - 50.0);
    let got = advantage(&d, &l).map_err(|e| e.to_string())?;
    if (got - want).abs() > 1e-9 {
        return Err(format!("seed {seed}: advantage {got} vs {want}"));
    }
    for target in [0.001, 0.1, 0.5] {
        let got = tpr_at_fpr(&s, &l, target).map_err(|e| e.to_string())?;
        let want = brute_tpr(&s, &l, target);
        if got != want {
            return Err(format!("seed {seed}: tpr@{target} {got} vs {want}"));
        }
    }
    Ok(())
}

/// Label-only dataset with uneven class sizes drawn from `seed`.
pub fn uneven_labels(seed: u64) -> Dataset {
    let mut rng = SeedPath::root(seed).with("classes").rng();
    let mut labels = Vec::new();
    for k in 0..10 {
        let n = rng.gen_range(5..120);
        labels.extend(std::iter::repeat_n(k, n));
    }
    Dataset::new(vec![0.0; labels.len() * 64], labels, 10, 1, 8, 8, Split::Train).expect("dataset")
}

/// Disjoint, exhaustive shards whose per-class counts sit within
/// `num_clients` samples of the class total times the client's proportion.
/// Largest-remainder rounding actually keeps them within one.
pub fn partition_case(seed: u64) -> Result<(), String> {
    let ds = uneven_labels(seed);
    let clients = 2 + (seed as usize % 15);
    let alpha = [0.1, 0.85, 5.0][seed as usize % 3];
    let p = dirichlet_partition(&ds, clients, alpha, seed).map_err(|e| e.to_string())?;
    let all: Vec<usize> = p.shards.iter().flatten().copied().collect();
    let unique: BTreeSet<usize> = all.iter().copied().collect();
    if all.len() != ds.len() || unique != (0..ds.len()).collect() {
        return Err(format!("seed {seed}: shards overlap or miss samples"));
    }
    let total: f64 = p.proportions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(format!("seed {seed}: proportions sum to {total}"));
    }
    for (k, class) in ds.indices_by_class().iter().enumerate() {
        for (c, shard) in p.shards.iter().enumerate() {
            let got = shard.iter().filter(|&&i| ds.labels[i] == k).count() as f64;
            let quota = p.proportions[c] * class.len() as f64;
            if (got - quota).abs() >= 1.0 || (got - quota).abs() > clients as f64 {
                return Err(format!("seed {seed} class {k} client {c}: {got} vs {quota}"));
            }
        }
    }
    Ok(())
}

/// Whether every shard size at alpha = 1e6 lies within per-class rounding
/// (one sample per class) plus 1% of the uniform size.
pub fn near_uniform(seed: u64) -> Result<(), String> {
    let ds = uneven_labels(seed);
    let p = dirichlet_partition(&ds, 5, 1e6, seed).map_err(|e| e.to_string())?;
    let mean = ds.len() as f64 / 5.0;
    let slack = ds.classes as f64 + 0.01 * mean;
    match p.sizes().into_iter().find(|&s| (s as f64 - mean).abs() > slack) {
        Some(s) => Err(format!("seed {seed}: size {s} vs uniform {mean}")),
        None => Ok(()),
    }
}
