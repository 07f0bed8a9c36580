use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::attacks::{AttackKind, AttackMetrics, AttackReport};
use crate::channel_plan::StrategyKind;
use crate::error::Result;

/// Per-client outcome of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientResult {
    pub client: usize,
    pub dataset_size: usize,
    pub complexity: usize,
    pub client_acc: f64,
    /// Absent for clients too small to attack.
    pub attacks: Option<Vec<(AttackKind, AttackMetrics)>>,
    pub average_auc: Option<f64>,
}

/// One (strategy, mix, repeat) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub strategy: StrategyKind,
    pub num_large_clients: usize,
    pub repeat: usize,
    pub repeat_frequency: f64,
    pub server_acc: f64,
    pub mean_client_acc: f64,
    /// Mean over clients holding the reduced model; NaN if there are none.
    pub small_client_acc: f64,
    /// Each attack's metrics averaged over the attacked clients.
    pub attacks: Vec<(AttackKind, AttackMetrics)>,
    pub avg_auc: f64,
    pub attacked_clients: usize,
    pub clients: Vec<ClientResult>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl ResultRow {
    /// Combines per-client accuracies and attack reports. `reports` may omit
    /// clients that were not attacked.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        strategy: StrategyKind,
        num_large_clients: usize,
        repeat: usize,
        repeat_frequency: f64,
        server_acc: f64,
        client_acc: &[f64],
        sizes: &[usize],
        complexities: &[usize],
        server_u: usize,
        reports: &[AttackReport],
    ) -> Self {
        let clients: Vec<ClientResult> = (0..client_acc.len())
            .map(|c| {
                let rep = reports.iter().find(|r| r.client == c);
                ClientResult {
                    client: c,
                    dataset_size: sizes[c],
                    complexity: complexities[c],
                    client_acc: client_acc[c],
                    attacks: rep.map(|r| r.results.iter().map(|x| (x.attack, x.metrics)).collect()),
                    average_auc: rep.map(|r| r.average_auc),
                }
            })
            .collect();
        let kinds: Vec<AttackKind> = reports
            .first()
            .map(|r| r.results.iter().map(|x| x.attack).collect())
            .unwrap_or_default();
        let attacks = kinds
            .iter()
            .map(|&k| {
                let ms: Vec<&AttackMetrics> = reports.iter().filter_map(|r| r.metrics(k)).collect();
                let avg = AttackMetrics {
                    auc: mean(ms.iter().map(|m| m.auc)),
                    advantage: mean(ms.iter().map(|m| m.advantage)),
                    tpr_at_fpr_10pct: mean(ms.iter().map(|m| m.tpr_at_fpr_10pct)),
                    tpr_at_fpr_01pct: mean(ms.iter().map(|m| m.tpr_at_fpr_01pct)),
                };
                (k, avg)
            })
            .collect();
        ResultRow {
            strategy,
            num_large_clients,
            repeat,
            repeat_frequency,
            server_acc,
            mean_client_acc: mean(client_acc.iter().copied()),
            small_client_acc: mean(
                clients
                    .iter()
                    .filter(|c| c.complexity < server_u)
                    .map(|c| c.client_acc),
            ),
            attacks,
            avg_auc: mean(reports.iter().map(|r| r.average_auc)),
            attacked_clients: reports.len(),
            clients,
        }
    }

    pub fn attack(&self, kind: AttackKind) -> Option<&AttackMetrics> {
        self.attacks.iter().find(|(k, _)| *k == kind).map(|(_, m)| m)
    }
}

/// Column order of `results.csv`.
pub const RESULT_COLUMNS: [&str; 21] = [
    "strategy",
    "num_large_clients",
    "repeat",
    "repeat_frequency",
    "server_acc",
    "mean_client_acc",
    "small_client_acc",
    "yeom_auc",
    "yeom_adv",
    "yeom_tpr_at_fpr_0.1",
    "yeom_tpr_at_fpr_0.001",
    "lira_auc",
    "lira_adv",
    "lira_tpr_at_fpr_0.1",
    "lira_tpr_at_fpr_0.001",
    "tmia_auc",
    "tmia_adv",
    "tmia_tpr_at_fpr_0.1",
    "tmia_tpr_at_fpr_0.001",
    "avg_auc",
    "attacked_clients",
];

pub(crate) fn fmt_f(x: f64, digits: usize) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.digits$}")
    }
}

/// Writes rows in the given order with fixed decimal places, so equal inputs
/// give byte-identical files.
pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        let mut rec = vec![
            r.strategy.name().to_string(),
            r.num_large_clients.to_string(),
            r.repeat.to_string(),
            fmt_f(r.repeat_frequency, 1),
            fmt_f(r.server_acc, 4),
            fmt_f(r.mean_client_acc, 4),
            fmt_f(r.small_client_acc, 4),
        ];
        for kind in AttackKind::ALL {
            match r.attack(kind) {
                Some(m) => rec.extend([
                    fmt_f(m.auc, 6),
                    fmt_f(m.advantage, 4),
                    fmt_f(m.tpr_at_fpr_10pct, 6),
                    fmt_f(m.tpr_at_fpr_01pct, 6),
                ]),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        rec.push(fmt_f(r.avg_auc, 6));
        rec.push(r.attacked_clients.to_string());
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

/// The subset of `results.csv` that summaries need.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ResultRecord {
    pub strategy: StrategyKind,
    pub num_large_clients: usize,
    pub repeat: usize,
    pub repeat_frequency: Option<f64>,
    pub server_acc: Option<f64>,
    pub mean_client_acc: Option<f64>,
    pub small_client_acc: Option<f64>,
    pub avg_auc: Option<f64>,
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_keeps_key_columns() {
        let row = ResultRow::new(StrategyKind::Gfm, 2, 1, 1.0, 55.5, &[40.0, 60.0], &[10, 20], &[2, 4], 4, &[]);
        assert_eq!(row.small_client_acc, 40.0);
        assert!(row.avg_auc.is_nan());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_results_csv(&p, &[row]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("strategy,num_large_clients,repeat"));
        let back = read_results_csv(&p).unwrap();
        assert_eq!(back[0].strategy, StrategyKind::Gfm);
        assert_eq!(back[0].server_acc, Some(55.5));
        assert_eq!(back[0].avg_auc, None);
    }
}
