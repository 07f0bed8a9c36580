use std::collections::HashSet;

use crate::attacks::{sample_losses, AttackConfig, AttackData, AttackTarget, EvalSet, ScoredDecisions, TmiaShadow};
use crate::error::{Error, Result};
use crate::nn::{AdamState, ModelParams, ScaleRate};
use crate::seed::SeedPath;
use crate::train::{self, TrainSettings};

fn log_loss(l: f64) -> f64 {
    l.max(1e-8).ln()
}

/// Loss trajectories of the scored samples: the log loss of a student after
/// each of `epochs` distillation epochs from `teacher` on `distill`, followed
/// by the teacher's own log loss. Rows are training samples then test samples.
#[allow(clippy::too_many_arguments)]
pub(crate) fn trajectories(
    teacher: &ModelParams<f32>,
    rate: ScaleRate,
    data: &AttackData<'_>,
    distill: &[usize],
    scored_train: &[usize],
    scored_test: &[usize],
    epochs: usize,
    settings: &TrainSettings,
    student_seed: SeedPath,
) -> Result<Vec<Vec<f64>>> {
    let n = scored_train.len() + scored_test.len();
    let mut feats: Vec<Vec<f64>> = vec![Vec::with_capacity(epochs + 1); n];
    let mut push = |losses: Vec<f64>| -> Result<()> {
        for (row, l) in feats.iter_mut().zip(losses) {
            if !l.is_finite() {
                return Err(Error::Numeric(format!("non-finite distillation loss {l}")));
            }
            row.push(log_loss(l));
        }
        Ok(())
    };
    let losses_of = |p: &ModelParams<f32>| -> Result<Vec<f64>> {
        let mut l = sample_losses(p, rate, data.train, scored_train)?;
        l.extend(sample_losses(p, rate, data.test, scored_test)?);
        Ok(l)
    };
    if epochs > 0 {
        if distill.is_empty() {
            return Err(Error::data("empty distillation set"));
        }
        let teacher_probs = train::probabilities(teacher, rate, data.train, distill)?;
        let mut student = ModelParams::init(&teacher.arch, student_seed.with("init").value());
        let mut adam = AdamState::for_params(&student);
        for e in 0..epochs {
            train::distill_epochs(
                &mut student,
                &mut adam,
                data.train,
                distill,
                &teacher_probs,
                rate,
                1,
                settings,
                student_seed.with("epoch").index(e as u64),
            )?;
            push(losses_of(&student)?)?;
        }
    }
    push(losses_of(teacher)?)?;
    Ok(feats)
}

/// Loss-trajectory attack. The target is distilled exactly as the shadow was
/// (same student initialization, distillation set minus the target's shard)
/// and its trajectories are scored by the shadow-trained attack model.
pub fn tmia_attack(
    target: &AttackTarget<'_>,
    data: &AttackData<'_>,
    eval: &EvalSet,
    shadow: &TmiaShadow,
    cfg: &AttackConfig,
) -> Result<ScoredDecisions> {
    let own: HashSet<usize> = target.members.iter().copied().collect();
    let distill: Vec<usize> = shadow.distill.iter().copied().filter(|i| !own.contains(i)).collect();
    let feats = trajectories(
        target.params,
        target.rate,
        data,
        &distill,
        &eval.members,
        &eval.nonmembers,
        cfg.distill_epochs,
        &shadow.distill_settings,
        shadow.student_seed,
    )?;
    let scores: Vec<f64> = feats.iter().map(|f| shadow.mlp.predict(f)).collect();
    Ok(ScoredDecisions {
        decisions: scores.iter().map(|&s| s >= 0.5).collect(),
        scores,
        labels: eval.labels(),
        threshold: Some(0.5),
    })
}
