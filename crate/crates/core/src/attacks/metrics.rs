use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::data("metric needs both members and non-members"));
    }
    Ok((pos, neg))
}

fn check_len(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN attack score".into()));
    }
    Ok(())
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Probability that a random member outscores a random non-member, ties
/// counting one half (Mann-Whitney U over average ranks).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_len(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Percentage of correct membership decisions.
pub fn accuracy(decisions: &[bool], labels: &[bool]) -> Result<f64> {
    if decisions.len() != labels.len() || labels.is_empty() {
        return Err(Error::dim("decisions and labels must be non-empty and equal length"));
    }
    let correct = decisions.iter().zip(labels).filter(|(d, l)| d == l).count();
    Ok(100.0 * correct as f64 / labels.len() as f64)
}

/// Attack advantage `2 · (accuracy% − 50)`.
pub fn advantage(decisions: &[bool], labels: &[bool]) -> Result<f64> {
    Ok(2.0 * (accuracy(decisions, labels)? - 50.0))
}

/// Points of the ROC step function as `(fpr, tpr, threshold)`, where each
/// point classifies `score >= threshold` as member. The first point uses an
/// infinite threshold.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64, f64)>> {
    check_len(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let order = descending(scores);
    let mut pts = vec![(0.0, 0.0, f64::INFINITY)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64, s));
    }
    Ok(pts)
}

/// Highest TPR among operating points whose FPR does not exceed `fpr_target`.
pub fn tpr_at_fpr(scores: &[f64], labels: &[bool], fpr_target: f64) -> Result<f64> {
    if !(fpr_target > 0.0 && fpr_target < 1.0) {
        return Err(Error::config(format!("fpr target {fpr_target} outside (0, 1)")));
    }
    Ok(roc_points(scores, labels)?
        .into_iter()
        .filter(|&(fpr, _, _)| fpr <= fpr_target)
        .map(|(_, tpr, _)| tpr)
        .fold(0.0, f64::max))
}

/// Threshold with the highest decision accuracy (`score >= threshold` means
/// member). Ties go to the higher threshold.
pub fn best_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pts = roc_points(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for (fpr, tpr, thr) in pts {
        let correct = tpr * pos + (1.0 - fpr) * neg;
        if correct > best.0 {
            best = (correct, thr);
        }
    }
    Ok(best.1)
}

/// The three per-attack figures reported for every target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub auc: f64,
    pub advantage: f64,
    pub tpr_at_fpr_10pct: f64,
    pub tpr_at_fpr_01pct: f64,
}

impl AttackMetrics {
    pub fn compute(scores: &[f64], decisions: &[bool], labels: &[bool]) -> Result<Self> {
        Ok(AttackMetrics {
            auc: auc(scores, labels)?,
            advantage: advantage(decisions, labels)?,
            tpr_at_fpr_10pct: tpr_at_fpr(scores, labels, 0.1)?,
            tpr_at_fpr_01pct: tpr_at_fpr(scores, labels, 0.001)?,
        })
    }
}
