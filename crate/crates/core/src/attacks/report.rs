use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::attacks::{AttackKind, AttackMetrics, EvalSet, ScoredDecisions};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub attack: AttackKind,
    pub metrics: AttackMetrics,
    pub scores: ScoredDecisions,
}

/// All attacks against one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub client: usize,
    pub dataset_size: usize,
    pub complexity: usize,
    pub eval: EvalSet,
    pub results: Vec<AttackResult>,
    /// Mean AUC over the attacks that ran.
    pub average_auc: f64,
}

impl AttackReport {
    pub fn new(client: usize, dataset_size: usize, complexity: usize, eval: EvalSet, results: Vec<AttackResult>) -> Self {
        let average_auc = if results.is_empty() {
            f64::NAN
        } else {
            results.iter().map(|r| r.metrics.auc).sum::<f64>() / results.len() as f64
        };
        AttackReport {
            client,
            dataset_size,
            complexity,
            eval,
            results,
            average_auc,
        }
    }

    pub fn metrics(&self, kind: AttackKind) -> Option<&AttackMetrics> {
        self.results.iter().find(|r| r.attack == kind).map(|r| &r.metrics)
    }
}

/// One row per (client, attack) plus an `average` row per client holding the
/// mean AUC.
pub fn write_reports_csv(path: &Path, reports: &[AttackReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["client", "attack", "auc", "adv", "tpr_at_fpr_0.1", "tpr_at_fpr_0.001"])?;
    for r in reports {
        for res in &r.results {
            let m = &res.metrics;
            w.write_record([
                r.client.to_string(),
                res.attack.name().to_string(),
                format!("{:.6}", m.auc),
                format!("{:.4}", m.advantage),
                format!("{:.6}", m.tpr_at_fpr_10pct),
                format!("{:.6}", m.tpr_at_fpr_01pct),
            ])?;
        }
        w.write_record([
            r.client.to_string(),
            "average".to_string(),
            format!("{:.6}", r.average_auc),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

pub fn write_reports_json(path: &Path, reports: &[AttackReport]) -> Result<()> {
    write_atomic(path, &serde_json::to_vec(reports)?)
}
