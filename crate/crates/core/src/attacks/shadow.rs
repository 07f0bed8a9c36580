use std::collections::BTreeMap;

use log::warn;
use rand::seq::index;
use rayon::prelude::*;

use crate::attacks::lira::confidences;
use crate::attacks::tmia::trajectories;
use crate::attacks::{AttackConfig, AttackData, Mlp};
use crate::data::Augment;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Architecture, ModelParams, ScaleRate};
use crate::seed::SeedPath;
use crate::train::{self, TrainSettings};

/// How shadow models are trained: the same optimizer and number of passes a
/// federation client makes over its data, on a subset of typical shard size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowBudget {
    pub epochs: usize,
    pub subset_size: usize,
    pub server_u: usize,
    pub settings: TrainSettings,
}

/// Confidences of every LiRA shadow model on every training and test sample,
/// and which training samples each shadow saw.
#[derive(Debug, Clone)]
pub struct LiraShadows {
    pub phi_train: Vec<Vec<f64>>,
    pub phi_test: Vec<Vec<f64>>,
    pub inside: Vec<Vec<bool>>,
}

/// The tMIA attack model for one model size, with the distillation set used
/// to produce its training trajectories.
#[derive(Debug, Clone)]
pub struct TmiaShadow {
    pub mlp: Mlp,
    pub distill: Vec<usize>,
    /// Initialization and shuffling of every distillation student, so shadow
    /// and target trajectories differ only in the teacher.
    pub student_seed: SeedPath,
    pub distill_settings: TrainSettings,
}

/// Shadow models shared by every target of one experiment cell, keyed by
/// client complexity.
#[derive(Debug, Clone, Default)]
pub struct ShadowBank {
    lira: BTreeMap<usize, LiraShadows>,
    tmia: BTreeMap<usize, TmiaShadow>,
}

fn shadow_model(u: usize, data: &AttackData<'_>, seed: SeedPath) -> Result<ModelParams<f32>> {
    let arch = Architecture::new(u, data.train.channels, data.train.classes)?;
    Ok(ModelParams::init(&arch, seed.with("init").value()))
}

fn train_shadow(
    u: usize,
    indices: &[usize],
    data: &AttackData<'_>,
    budget: &ShadowBudget,
    seed: SeedPath,
) -> Result<(ModelParams<f32>, ScaleRate)> {
    let rate = ScaleRate::from_widths(u, budget.server_u)?;
    let mut params = shadow_model(u, data, seed)?;
    let mut adam = AdamState::for_params(&params);
    train::train_epochs(
        &mut params,
        &mut adam,
        data.train,
        indices,
        rate,
        budget.epochs,
        &budget.settings,
        seed.with("train"),
    )?;
    Ok((params, rate))
}

impl ShadowBank {
    pub fn build(
        data: &AttackData<'_>,
        complexities: &[usize],
        budget: &ShadowBudget,
        cfg: &AttackConfig,
        seed: SeedPath,
    ) -> Result<Self> {
        let mut sizes: Vec<usize> = complexities.to_vec();
        sizes.sort_unstable();
        sizes.dedup();
        let n = data.train.len();
        let subset = budget.subset_size.clamp(1, n);
        let mut bank = ShadowBank::default();

        if cfg.lira {
            if cfg.num_shadow < 2 {
                return Err(Error::config("LiRA needs at least 2 shadow models"));
            }
            let jobs: Vec<(usize, usize)> = sizes
                .iter()
                .flat_map(|&u| (0..cfg.num_shadow).map(move |s| (u, s)))
                .collect();
            let trained = jobs
                .par_iter()
                .map(|&(u, s)| {
                    let sd = seed.with("lira").index(u as u64).index(s as u64);
                    let mut idx = index::sample(&mut sd.with("subset").rng(), n, subset).into_vec();
                    idx.sort_unstable();
                    let (p, rate) = train_shadow(u, &idx, data, budget, sd)?;
                    let all_train: Vec<usize> = (0..n).collect();
                    let all_test: Vec<usize> = (0..data.test.len()).collect();
                    let mut inside = vec![false; n];
                    for &i in &idx {
                        inside[i] = true;
                    }
                    Ok((
                        u,
                        confidences(&p, rate, data.train, &all_train)?,
                        confidences(&p, rate, data.test, &all_test)?,
                        inside,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            for (u, tr, te, ins) in trained {
                let e = bank.lira.entry(u).or_insert_with(|| LiraShadows {
                    phi_train: Vec::new(),
                    phi_test: Vec::new(),
                    inside: Vec::new(),
                });
                e.phi_train.push(tr);
                e.phi_test.push(te);
                e.inside.push(ins);
            }
        }

        if cfg.tmia {
            let built = sizes
                .par_iter()
                .map(|&u| {
                    let sd = seed.with("tmia").index(u as u64);
                    let mut want = 2 * subset + cfg.distill_size;
                    let (mut s_in, mut s_dl) = (subset, cfg.distill_size);
                    if want > n {
                        // shrink both parts proportionally to fit the pool
                        let f = n as f64 / want as f64;
                        s_in = ((subset as f64 * f).floor() as usize).max(1);
                        s_dl = n.saturating_sub(2 * s_in);
                        want = 2 * s_in + s_dl;
                        warn!("tMIA shadow sets shrunk to {s_in}/{s_in}/{s_dl} to fit {n} samples");
                    }
                    if s_dl == 0 {
                        return Err(Error::data("training pool too small for tMIA shadow sets"));
                    }
                    let perm = index::sample(&mut sd.with("split").rng(), n, want).into_vec();
                    let sw_in = perm[..s_in].to_vec();
                    let sw_out = perm[s_in..2 * s_in].to_vec();
                    let mut distill = perm[2 * s_in..].to_vec();
                    distill.sort_unstable();
                    let (p, rate) = train_shadow(u, &sw_in, data, budget, sd)?;
                    let scored: Vec<usize> = sw_in.iter().chain(&sw_out).copied().collect();
                    let distill_settings = TrainSettings {
                        augment: Augment::OFF,
                        ..budget.settings
                    };
                    let feats = trajectories(
                        &p,
                        rate,
                        data,
                        &distill,
                        &scored,
                        &[],
                        cfg.distill_epochs,
                        &distill_settings,
                        sd.with("student"),
                    )?;
                    let labels: Vec<bool> = (0..scored.len()).map(|i| i < s_in).collect();
                    let mlp = Mlp::train(&feats, &labels, cfg.mlp_hidden, cfg.mlp_epochs, cfg.mlp_adam, sd.with("mlp"))?;
                    Ok((
                        u,
                        TmiaShadow {
                            mlp,
                            distill,
                            student_seed: sd.with("student"),
                            distill_settings,
                        },
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            bank.tmia.extend(built);
        }
        Ok(bank)
    }

    pub fn lira(&self, complexity: usize) -> Result<&LiraShadows> {
        self.lira
            .get(&complexity)
            .ok_or_else(|| Error::config(format!("no LiRA shadows for complexity {complexity}")))
    }

    pub fn tmia(&self, complexity: usize) -> Result<&TmiaShadow> {
        self.tmia
            .get(&complexity)
            .ok_or_else(|| Error::config(format!("no tMIA shadow for complexity {complexity}")))
    }
}
