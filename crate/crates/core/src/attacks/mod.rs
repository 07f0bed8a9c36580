//! Black-box membership inference against archived client models: a loss
//! threshold (Yeom), offline LiRA and the loss-trajectory attack (tMIA), plus
//! the metrics they are judged by.

pub mod metrics;
mod lira;
mod mlp;
mod report;
mod shadow;
mod tmia;
mod yeom;

use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{per_sample_loss, Adam, ModelParams, ScaleRate};
use crate::seed::SeedPath;
use crate::train;

pub use lira::lira_offline;
pub use metrics::{accuracy, advantage, auc, best_threshold, roc_points, tpr_at_fpr, AttackMetrics};
pub use mlp::Mlp;
pub use report::{write_reports_csv, write_reports_json, AttackReport, AttackResult};
pub use shadow::{LiraShadows, ShadowBank, ShadowBudget, TmiaShadow};
pub use tmia::tmia_attack;
pub use yeom::{yeom_attack, yeom_threshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Yeom,
    Lira,
    Tmia,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Yeom, AttackKind::Lira, AttackKind::Tmia];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Yeom => "yeom",
            AttackKind::Lira => "lira",
            AttackKind::Tmia => "tmia",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the size of the attacker's known-member set is derived from `|D_c|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeRule {
    /// `max(floor, ⌊fraction·|D_c|⌋)`.
    #[default]
    Max,
    /// `min(floor, ⌊fraction·|D_c|⌋)`, the literal printed formula.
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub yeom: bool,
    pub lira: bool,
    pub tmia: bool,
    pub knowledge_rule: KnowledgeRule,
    pub knowledge_fraction: f64,
    pub knowledge_floor: usize,
    /// Upper bound on members (and non-members) per evaluation set.
    pub eval_cap: usize,
    /// Clients with fewer samples are not attacked.
    pub min_client_size: usize,
    pub num_shadow: usize,
    pub distill_epochs: usize,
    pub distill_size: usize,
    pub mlp_hidden: usize,
    pub mlp_epochs: usize,
    pub mlp_adam: Adam,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            yeom: true,
            lira: true,
            tmia: true,
            knowledge_rule: KnowledgeRule::Max,
            knowledge_fraction: 0.01,
            knowledge_floor: 3,
            eval_cap: 5000,
            min_client_size: 20,
            num_shadow: 16,
            distill_epochs: 25,
            distill_size: 500,
            mlp_hidden: 16,
            mlp_epochs: 60,
            mlp_adam: Adam {
                lr: 1e-2,
                ..Adam::default()
            },
        }
    }
}

impl AttackConfig {
    pub fn enabled(&self) -> Vec<AttackKind> {
        AttackKind::ALL
            .into_iter()
            .filter(|k| match k {
                AttackKind::Yeom => self.yeom,
                AttackKind::Lira => self.lira,
                AttackKind::Tmia => self.tmia,
            })
            .collect()
    }

    pub fn knowledge_size(&self, dataset_size: usize) -> usize {
        let frac = (self.knowledge_fraction * dataset_size as f64).floor() as usize;
        match self.knowledge_rule {
            KnowledgeRule::Max => frac.max(self.knowledge_floor),
            KnowledgeRule::Min => frac.min(self.knowledge_floor),
        }
    }
}

/// The data every attack reads: the federation's training pool (member
/// shards and attacker auxiliary data) and the held-out test set that
/// supplies non-members.
#[derive(Debug, Clone, Copy)]
pub struct AttackData<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
}

/// One client's final model and its training shard.
#[derive(Debug, Clone, Copy)]
pub struct AttackTarget<'a> {
    pub client: usize,
    pub params: &'a ModelParams<f32>,
    pub rate: ScaleRate,
    /// Training-set indices of `D_c`.
    pub members: &'a [usize],
}

impl AttackTarget<'_> {
    pub fn complexity(&self) -> usize {
        self.params.arch.widths[0]
    }
}

/// Balanced evaluation set. Members are training indices, non-members test
/// indices; `known` is the attacker's `D_A+`, excluded from `members`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub known: Vec<usize>,
    pub members: Vec<usize>,
    pub nonmembers: Vec<usize>,
}

impl EvalSet {
    pub fn draw(members: &[usize], test_len: usize, cfg: &AttackConfig, seed: SeedPath) -> Result<Self> {
        let k = cfg.knowledge_size(members.len());
        if k == 0 {
            return Err(Error::config("attacker knowledge set is empty"));
        }
        if members.len() <= k {
            return Err(Error::data(format!(
                "client with {} samples cannot spare {k} known members",
                members.len()
            )));
        }
        let mut rng = seed.rng();
        let perm = index::sample(&mut rng, members.len(), members.len()).into_vec();
        let known: Vec<usize> = perm[..k].iter().map(|&p| members[p]).collect();
        let pool: Vec<usize> = perm[k..].iter().map(|&p| members[p]).collect();
        let n = pool.len().min(cfg.eval_cap).min(test_len);
        if n == 0 {
            return Err(Error::data("no non-member samples available"));
        }
        let mut m: Vec<usize> = pool[..n].to_vec();
        m.sort_unstable();
        let mut nm = index::sample(&mut rng, test_len, n).into_vec();
        nm.sort_unstable();
        Ok(EvalSet {
            known,
            members: m,
            nonmembers: nm,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len() + self.nonmembers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ground truth in scoring order: members first.
    pub fn labels(&self) -> Vec<bool> {
        let mut l = vec![true; self.members.len()];
        l.resize(self.len(), false);
        l
    }
}

/// Per-sample scores (higher means more member-like) and the binary
/// decisions derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDecisions {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub decisions: Vec<bool>,
    pub threshold: Option<f64>,
}

impl ScoredDecisions {
    pub fn metrics(&self) -> Result<AttackMetrics> {
        AttackMetrics::compute(&self.scores, &self.decisions, &self.labels)
    }

    /// Decisions from the accuracy-maximizing threshold over `scores`.
    fn with_best_threshold(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        let thr = best_threshold(&scores, &labels)?;
        Ok(ScoredDecisions {
            decisions: scores.iter().map(|&s| s >= thr).collect(),
            scores,
            labels,
            threshold: Some(thr),
        })
    }
}

/// Per-sample cross-entropy of `params` on the evaluation set, members first.
pub(crate) fn eval_losses(
    params: &ModelParams<f32>,
    rate: ScaleRate,
    data: &AttackData<'_>,
    eval: &EvalSet,
) -> Result<Vec<f64>> {
    let mut out = sample_losses(params, rate, data.train, &eval.members)?;
    out.extend(sample_losses(params, rate, data.test, &eval.nonmembers)?);
    Ok(out)
}

pub(crate) fn sample_losses(
    params: &ModelParams<f32>,
    rate: ScaleRate,
    data: &Dataset,
    indices: &[usize],
) -> Result<Vec<f64>> {
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let logits = train::logits(params, rate, data, indices)?;
    let labels: Vec<usize> = indices.iter().map(|&i| data.labels[i]).collect();
    per_sample_loss(&logits, &labels, data.classes)
}

/// Runs every enabled attack against one target.
pub fn attack_suite(
    target: &AttackTarget<'_>,
    data: &AttackData<'_>,
    bank: &ShadowBank,
    cfg: &AttackConfig,
    seed: SeedPath,
) -> Result<AttackReport> {
    let eval = EvalSet::draw(
        target.members,
        data.test.len(),
        cfg,
        seed.with("eval").index(target.client as u64),
    )?;
    let mut results = Vec::new();
    for kind in cfg.enabled() {
        let scored = match kind {
            AttackKind::Yeom => yeom_attack(target, data, &eval)?,
            AttackKind::Lira => lira_offline(target, data, &eval, bank.lira(target.complexity())?)?,
            AttackKind::Tmia => tmia_attack(
                target,
                data,
                &eval,
                bank.tmia(target.complexity())?,
                cfg,
            )?,
        };
        results.push(AttackResult {
            attack: kind,
            metrics: scored.metrics()?,
            scores: scored,
        });
    }
    Ok(AttackReport::new(target.client, target.members.len(), target.complexity(), eval, results))
}
