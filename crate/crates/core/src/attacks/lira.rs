use log::warn;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::attacks::{AttackData, AttackTarget, EvalSet, LiraShadows, ScoredDecisions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{ModelParams, ScaleRate};
use crate::train;

const CLAMP: f64 = 1e-7;
const SIGMA_FLOOR: f64 = 1e-6;

/// Logit-scaled true-class probability `ln(p_y / (1 − p_y))`, with `p_y`
/// clamped to `[1e-7, 1 − 1e-7]`.
pub fn logit_confidence(logits: &[f32], label: usize) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
    let denom: f64 = logits.iter().map(|&v| (f64::from(v) - max).exp()).sum();
    let p = ((f64::from(logits[label]) - max).exp() / denom).clamp(CLAMP, 1.0 - CLAMP);
    (p / (1.0 - p)).ln()
}

pub(crate) fn confidences(
    params: &ModelParams<f32>,
    rate: ScaleRate,
    data: &Dataset,
    indices: &[usize],
) -> Result<Vec<f64>> {
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let logits = train::logits(params, rate, data, indices)?;
    Ok(logits
        .chunks(data.classes)
        .zip(indices)
        .map(|(row, &i)| logit_confidence(row, data.labels[i]))
        .collect())
}

/// Mean and unbiased standard deviation; `None` below two observations.
pub fn gaussian_fit(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Offline LiRA membership score `Pr[N(μ, σ²) ≤ φ]` for a target confidence.
/// Returns the score and whether σ had to be floored.
pub fn lira_score(phi: f64, out_confidences: &[f64]) -> Result<(f64, bool)> {
    let (mu, sigma) = gaussian_fit(out_confidences)
        .ok_or_else(|| Error::data("LiRA needs at least 2 shadow confidences"))?;
    let floored = !(sigma >= SIGMA_FLOOR);
    let sigma = if floored { SIGMA_FLOOR } else { sigma };
    let normal = Normal::new(mu, sigma).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok((normal.cdf(phi), floored))
}

/// Offline LiRA: every sample is compared against the shadow models that did
/// not train on it.
pub fn lira_offline(
    target: &AttackTarget<'_>,
    data: &AttackData<'_>,
    eval: &EvalSet,
    shadows: &LiraShadows,
) -> Result<ScoredDecisions> {
    let mut phi = confidences(target.params, target.rate, data.train, &eval.members)?;
    phi.extend(confidences(target.params, target.rate, data.test, &eval.nonmembers)?);
    let mut scores = Vec::with_capacity(phi.len());
    let mut floored = 0usize;
    let mut mixed = 0usize;
    let samples = eval
        .members
        .iter()
        .map(|&i| (true, i))
        .chain(eval.nonmembers.iter().map(|&i| (false, i)));
    for ((from_train, i), &p) in samples.zip(&phi) {
        let outs: Vec<f64> = if from_train {
            let outs: Vec<f64> = (0..shadows.phi_train.len())
                .filter(|&s| !shadows.inside[s][i])
                .map(|s| shadows.phi_train[s][i])
                .collect();
            if outs.len() < 2 {
                // too few shadows left out this sample; use all of them
                mixed += 1;
                shadows.phi_train.iter().map(|v| v[i]).collect()
            } else {
                outs
            }
        } else {
            shadows.phi_test.iter().map(|v| v[i]).collect()
        };
        let (score, fl) = lira_score(p, &outs)?;
        floored += usize::from(fl);
        scores.push(score);
    }
    if floored > 0 {
        warn!(
            "client {}: LiRA shadow spread below {SIGMA_FLOOR} for {floored} samples; floored",
            target.client
        );
    }
    if mixed > 0 {
        warn!(
            "client {}: {mixed} samples had fewer than 2 OUT shadows; scored against all shadows",
            target.client
        );
    }
    ScoredDecisions::with_best_threshold(scores, eval.labels())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_at_mean_is_half() {
        let (s, fl) = lira_score(0.5, &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
        assert!(!fl);
    }

    #[test]
    fn fit_is_unbiased() {
        let (m, sd) = gaussian_fit(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(m, 0.5);
        assert!((sd * sd - 0.25 * 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn far_right_tail_is_member() {
        let (s, _) = lira_score(50.0, &[0.0, 0.1, -0.1, 0.05]).unwrap();
        assert!(s > 1.0 - 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(lira_score(0.0, &[1.0]).is_err());
        let (s, fl) = lira_score(2.0, &[1.0, 1.0, 1.0]).unwrap();
        assert!(fl);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn confidence_clamps() {
        let c = logit_confidence(&[100.0, -100.0], 0);
        assert!((c - ((1.0 - 1e-7) / 1e-7f64).ln()).abs() < 1e-6);
        assert!(logit_confidence(&[0.0, 0.0], 1).abs() < 1e-12);
    }
}
