use crate::error::{Error, Result};
use crate::nn::network::{backward, ForwardCache};
use crate::nn::{ModelParams, Scalar};

fn log_softmax_row<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let lse = row.iter().fold(T::zero(), |s, &v| s + (v - max).exp()).ln() + max;
    row.iter().map(|&v| v - lse).collect()
}

pub fn softmax<T: Scalar>(logits: &[T], classes: usize) -> Vec<T> {
    logits
        .chunks(classes)
        .flat_map(|row| log_softmax_row(row).into_iter().map(|v| v.exp()))
        .collect()
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::dim(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::data(format!("label {bad} outside 0..{classes}")));
    }
    Ok(())
}

/// Mean cross-entropy over the batch and its gradient with respect to the
/// logits. Each sample's term is multiplied by its weight.
pub fn weighted_cross_entropy<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    weights: &[T],
    classes: usize,
) -> Result<(T, Vec<T>)> {
    let batch = logits.len() / classes;
    check_labels(labels, batch, classes)?;
    if weights.len() != batch {
        return Err(Error::dim("weight count differs from batch size"));
    }
    let inv_b = T::one() / T::of(batch as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for ((row, &y), &wt) in logits.chunks(classes).zip(labels).zip(weights) {
        let logp = log_softmax_row(row);
        loss += -logp[y] * wt;
        for (k, lp) in logp.into_iter().enumerate() {
            let target = if k == y { T::one() } else { T::zero() };
            grad.push((lp.exp() - target) * wt * inv_b);
        }
    }
    Ok((loss * inv_b, grad))
}

pub fn cross_entropy<T: Scalar>(logits: &[T], labels: &[usize], classes: usize) -> Result<(T, Vec<T>)> {
    let ones = vec![T::one(); logits.len() / classes];
    weighted_cross_entropy(logits, labels, &ones, classes)
}

/// Per-sample cross-entropy, computed in `f64`.
pub fn per_sample_loss<T: Scalar>(logits: &[T], labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    check_labels(labels, logits.len() / classes, classes)?;
    Ok(logits
        .chunks(classes)
        .zip(labels)
        .map(|(row, &y)| {
            let row: Vec<f64> = row.iter().map(|v| v.f64()).collect();
            -log_softmax_row(&row)[y]
        })
        .collect())
}

/// Mean KL divergence `KL(teacher ‖ student)` at temperature 1 and its
/// gradient with respect to the student logits.
pub fn distillation_loss<T: Scalar>(
    student_logits: &[T],
    teacher_probs: &[T],
    classes: usize,
) -> Result<(T, Vec<T>)> {
    if student_logits.len() != teacher_probs.len() {
        return Err(Error::dim("student and teacher outputs differ in size"));
    }
    let batch = student_logits.len() / classes;
    let inv_b = T::one() / T::of(batch as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(student_logits.len());
    for (row, t) in student_logits.chunks(classes).zip(teacher_probs.chunks(classes)) {
        let logp = log_softmax_row(row);
        for (lp, &tk) in logp.into_iter().zip(t) {
            if tk > T::zero() {
                loss += tk * (tk.ln() - lp);
            }
            grad.push((lp.exp() - tk) * inv_b);
        }
    }
    Ok((loss * inv_b, grad))
}

/// Mean cross-entropy of a train-mode forward pass and the gradients of every
/// trainable tensor.
pub fn loss_and_backward<T: Scalar>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    labels: &[usize],
) -> Result<(T, ModelParams<T>)> {
    let (loss, dlogits) = cross_entropy(&cache.logits, labels, params.arch.classes)?;
    let grads = backward(params, cache, &dlogits)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        for c in [2usize, 3, 10, 100] {
            let logits = vec![0.25f64; 2 * c];
            let (loss, _) = cross_entropy(&logits, &[0, c - 1], c).unwrap();
            assert!((loss - (c as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_zero_gradient() {
        let logits = vec![0.3f64, -1.0, 2.0, 0.1, 0.0, 0.5];
        let (loss, g) = weighted_cross_entropy(&logits, &[1, 2], &[0.0, 0.0], 3).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn label_out_of_range() {
        let logits = vec![0.0f32; 4];
        assert!(matches!(cross_entropy(&logits, &[0, 2], 2), Err(Error::Data(_))));
    }

    #[test]
    fn distillation_of_identical_outputs_is_zero() {
        let logits = vec![0.3f64, -1.0, 2.0];
        let probs = softmax(&logits, 3);
        let (loss, g) = distillation_loss(&logits, &probs, 3).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn per_sample_matches_mean() {
        let logits = vec![0.3f32, -1.0, 2.0, 0.1, 0.0, 0.5];
        let per = per_sample_loss(&logits, &[0, 2], 3).unwrap();
        let (mean, _) = cross_entropy(&logits, &[0, 2], 3).unwrap();
        assert!(((per[0] + per[1]) / 2.0 - mean as f64).abs() < 1e-6);
    }
}
