//! Minibatch training and evaluation helpers shared by federation clients,
//! shadow models and distillation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Augment, Dataset};
use crate::error::{Error, Result};
use crate::nn::{
    backward, cross_entropy, distillation_loss, forward, predict, softmax, Adam, AdamState, BatchView,
    Mode, ModelParams, ScaleRate,
};
use crate::seed::SeedPath;

const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub adam: Adam,
    pub batch_size: usize,
    pub augment: Augment,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            adam: Adam::default(),
            batch_size: 32,
            augment: Augment::OFF,
        }
    }
}

fn view<'a>(data: &Dataset, images: &'a [f32], len: usize) -> BatchView<'a, f32> {
    BatchView::new(images, len, data.channels, data.height, data.width)
}

/// What a training batch is fitted to.
enum Targets<'a> {
    Labels,
    /// Teacher probabilities for every sample of `indices`, row-aligned.
    Soft(&'a [f32]),
}

fn run_epochs(
    params: &mut ModelParams<f32>,
    state: &mut AdamState<f32>,
    data: &Dataset,
    indices: &[usize],
    targets: Targets<'_>,
    rate: ScaleRate,
    epochs: usize,
    settings: &TrainSettings,
    seed: SeedPath,
) -> Result<f64> {
    if settings.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    if indices.is_empty() || epochs == 0 {
        return Ok(0.0);
    }
    let classes = data.classes;
    let mut rng = seed.rng();
    // positions into `indices`, so soft targets stay aligned after shuffling
    let mut order: Vec<usize> = (0..indices.len()).collect();
    let mut total = 0.0;
    let mut batches = 0usize;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(settings.batch_size) {
            let ids: Vec<usize> = chunk.iter().map(|&p| indices[p]).collect();
            let (mut images, labels) = data.gather(&ids);
            settings
                .augment
                .apply(&mut images, data.channels, data.height, data.width, &mut rng);
            let (_, cache) = forward(params, &view(data, &images, ids.len()), rate, Mode::Train)?;
            let (loss, dlogits) = match targets {
                Targets::Labels => cross_entropy(&cache.logits, &labels, classes)?,
                Targets::Soft(probs) => {
                    let t: Vec<f32> = chunk
                        .iter()
                        .flat_map(|&p| probs[p * classes..(p + 1) * classes].iter().copied())
                        .collect();
                    distillation_loss(&cache.logits, &t, classes)?
                }
            };
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss {loss}")));
            }
            let grads = backward(params, &cache, &dlogits)?;
            settings.adam.step(params, &grads, state)?;
            total += f64::from(loss);
            batches += 1;
        }
    }
    Ok(total / batches as f64)
}

/// Cross-entropy training over `indices` for `epochs` passes. The shuffle and
/// augmentation stream is `seed`. Returns the mean batch loss.
#[allow(clippy::too_many_arguments)]
pub fn train_epochs(
    params: &mut ModelParams<f32>,
    state: &mut AdamState<f32>,
    data: &Dataset,
    indices: &[usize],
    rate: ScaleRate,
    epochs: usize,
    settings: &TrainSettings,
    seed: SeedPath,
) -> Result<f64> {
    run_epochs(params, state, data, indices, Targets::Labels, rate, epochs, settings, seed)
}

/// Trains `student` to match `teacher_probs` (one row per entry of `indices`)
/// under the KL distillation loss. Returns the mean batch loss.
#[allow(clippy::too_many_arguments)]
pub fn distill_epochs(
    student: &mut ModelParams<f32>,
    state: &mut AdamState<f32>,
    data: &Dataset,
    indices: &[usize],
    teacher_probs: &[f32],
    rate: ScaleRate,
    epochs: usize,
    settings: &TrainSettings,
    seed: SeedPath,
) -> Result<f64> {
    if teacher_probs.len() != indices.len() * data.classes {
        return Err(Error::dim("teacher outputs do not match the distillation set"));
    }
    run_epochs(
        student,
        state,
        data,
        indices,
        Targets::Soft(teacher_probs),
        rate,
        epochs,
        settings,
        seed,
    )
}

/// Eval-mode logits for the given samples, row-major `(len, classes)`.
pub fn logits(params: &ModelParams<f32>, rate: ScaleRate, data: &Dataset, indices: &[usize]) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(indices.len() * data.classes);
    for ids in indices.chunks(EVAL_CHUNK) {
        let (images, _) = data.gather(ids);
        out.extend(predict(params, &view(data, &images, ids.len()), rate)?);
    }
    Ok(out)
}

/// Eval-mode class probabilities for the given samples.
pub fn probabilities(
    params: &ModelParams<f32>,
    rate: ScaleRate,
    data: &Dataset,
    indices: &[usize],
) -> Result<Vec<f32>> {
    Ok(softmax(&logits(params, rate, data, indices)?, data.classes))
}

/// Top-1 accuracy in percent over the whole dataset.
pub fn evaluate(params: &ModelParams<f32>, rate: ScaleRate, data: &Dataset) -> Result<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    evaluate_on(params, rate, data, &all)
}

/// Top-1 accuracy in percent over the given samples. Ties between classes go
/// to the lowest class index.
pub fn evaluate_on(params: &ModelParams<f32>, rate: ScaleRate, data: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::data("cannot evaluate on an empty set"));
    }
    let out = logits(params, rate, data, indices)?;
    let correct = out
        .chunks(data.classes)
        .zip(indices)
        .filter(|(row, &i)| argmax(row) == data.labels[i])
        .count();
    Ok(100.0 * correct as f64 / indices.len() as f64)
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_dataset, SyntheticSpec};
    use crate::nn::build_model;

    #[test]
    fn constant_logits_give_chance_accuracy() {
        let spec = SyntheticSpec {
            per_class: 5,
            test_per_class: 10,
            ..SyntheticSpec::default()
        };
        let (_, test) = synthetic_dataset(&spec).unwrap();
        let mut p = build_model(1, 3, 10, 0).unwrap();
        for blk in &mut p.blocks {
            blk.conv_weight.fill(0.0);
        }
        p.dense_weight.fill(0.0);
        // all logits equal, argmax picks class 0, which is a tenth of a balanced set
        let acc = evaluate(&p, ScaleRate::FULL, &test).unwrap();
        assert!((acc - 10.0).abs() < 1e-12);
    }

    #[test]
    fn empty_eval_set_rejected() {
        let (train, _) = synthetic_dataset(&SyntheticSpec::default()).unwrap();
        let p = build_model(1, 3, 10, 0).unwrap();
        assert!(evaluate_on(&p, ScaleRate::FULL, &train, &[]).is_err());
    }

    #[test]
    fn distillation_moves_student_toward_teacher() {
        let (train, _) = synthetic_dataset(&SyntheticSpec {
            per_class: 8,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let idx: Vec<usize> = (0..train.len()).collect();
        let teacher = build_model(2, 3, 10, 1).unwrap();
        let t = probabilities(&teacher, ScaleRate::FULL, &train, &idx).unwrap();
        let mut student = build_model(2, 3, 10, 2).unwrap();
        let kl = |s: &ModelParams<f32>| {
            let l = logits(s, ScaleRate::FULL, &train, &idx).unwrap();
            distillation_loss(&l, &t, 10).unwrap().0
        };
        let before = kl(&student);
        let mut st = AdamState::for_params(&student);
        let settings = TrainSettings {
            adam: Adam { lr: 1e-2, ..Adam::default() },
            ..TrainSettings::default()
        };
        distill_epochs(&mut student, &mut st, &train, &idx, &t, ScaleRate::FULL, 20, &settings, SeedPath::root(0))
            .unwrap();
        assert!(kl(&student) < before);
    }
}
