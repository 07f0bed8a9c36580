use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::channel_plan::StrategyKind;
use crate::error::{Error, Result};
use crate::experiment::results::{fmt_f, read_results_csv, ResultRecord};

/// Pearson correlation between `log10 |D_c|` and attack advantage over the
/// clients with at least `min_size` samples.
pub fn pearson_log_corr(sizes: &[usize], advantages: &[f64], min_size: usize) -> Result<f64> {
    if sizes.len() != advantages.len() {
        return Err(Error::dim("one advantage per client size required"));
    }
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .zip(advantages)
        .filter(|(&s, _)| s >= min_size && s > 0)
        .map(|(&s, &a)| ((s as f64).log10(), a))
        .collect();
    if pts.len() < 3 {
        return Err(Error::data(format!(
            "{} clients with at least {min_size} samples; need 3",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::data("zero variance in sizes or advantages"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Mean and sample standard deviation (zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let xs: Vec<f64> = xs.iter().copied().filter(|x| !x.is_nan()).collect();
        if xs.is_empty() {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: StrategyKind,
    pub num_large_clients: usize,
    pub repeats: usize,
    pub repeat_frequency: f64,
    pub server_acc: Stat,
    pub mean_client_acc: Stat,
    pub small_client_acc: Stat,
    pub avg_auc: Stat,
}

/// Best minus worst strategy mean within one mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub num_large_clients: usize,
    pub strategies: usize,
    pub server_acc: f64,
    pub mean_client_acc: f64,
    pub avg_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub deltas: Vec<DeltaRow>,
}

impl Summary {
    pub fn row(&self, strategy: StrategyKind, num_large_clients: usize) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.num_large_clients == num_large_clients)
    }

    pub fn delta(&self, num_large_clients: usize) -> Option<&DeltaRow> {
        self.deltas.iter().find(|d| d.num_large_clients == num_large_clients)
    }
}

fn spread(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.filter(|x| !x.is_nan()).collect();
    if xs.is_empty() {
        return f64::NAN;
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Groups result records by (strategy, mix), ordered by mix, then by
/// descending repeat frequency, then by strategy.
pub fn summarize_records(records: &[ResultRecord]) -> Summary {
    let mut groups: BTreeMap<(usize, StrategyKind), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.num_large_clients, r.strategy)).or_default().push(r);
    }
    let nan = |x: Option<f64>| x.unwrap_or(f64::NAN);
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((mix, strategy), rs)| SummaryRow {
            strategy,
            num_large_clients: mix,
            repeats: rs.len(),
            repeat_frequency: nan(rs[0].repeat_frequency),
            server_acc: Stat::of(&rs.iter().map(|r| nan(r.server_acc)).collect::<Vec<_>>()),
            mean_client_acc: Stat::of(&rs.iter().map(|r| nan(r.mean_client_acc)).collect::<Vec<_>>()),
            small_client_acc: Stat::of(&rs.iter().map(|r| nan(r.small_client_acc)).collect::<Vec<_>>()),
            avg_auc: Stat::of(&rs.iter().map(|r| nan(r.avg_auc)).collect::<Vec<_>>()),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.num_large_clients
            .cmp(&b.num_large_clients)
            .then(b.repeat_frequency.total_cmp(&a.repeat_frequency))
            .then(a.strategy.cmp(&b.strategy))
    });
    let mut mixes: Vec<usize> = rows.iter().map(|r| r.num_large_clients).collect();
    mixes.dedup();
    let deltas = mixes
        .into_iter()
        .map(|mix| {
            let in_mix: Vec<&SummaryRow> = rows.iter().filter(|r| r.num_large_clients == mix).collect();
            DeltaRow {
                num_large_clients: mix,
                strategies: in_mix.len(),
                server_acc: spread(in_mix.iter().map(|r| r.server_acc.mean)),
                mean_client_acc: spread(in_mix.iter().map(|r| r.mean_client_acc.mean)),
                avg_auc: spread(in_mix.iter().map(|r| r.avg_auc.mean)),
            }
        })
        .collect();
    Summary { rows, deltas }
}

/// Reads `<dir>/results.csv` and writes `summary.csv` and `deltas.csv` next
/// to it.
pub fn summarize(dir: &Path) -> Result<Summary> {
    let records = read_results_csv(&dir.join("results.csv"))?;
    if records.is_empty() {
        return Err(Error::data(format!("{} has no completed cells", dir.display())));
    }
    let summary = summarize_records(&records);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "strategy",
        "num_large_clients",
        "repeats",
        "repeat_frequency",
        "server_acc_mean",
        "server_acc_std",
        "mean_client_acc_mean",
        "mean_client_acc_std",
        "small_client_acc_mean",
        "small_client_acc_std",
        "avg_auc_mean",
        "avg_auc_std",
    ])?;
    for r in &summary.rows {
        w.write_record([
            r.strategy.name().to_string(),
            r.num_large_clients.to_string(),
            r.repeats.to_string(),
            fmt_f(r.repeat_frequency, 1),
            fmt_f(r.server_acc.mean, 4),
            fmt_f(r.server_acc.std, 4),
            fmt_f(r.mean_client_acc.mean, 4),
            fmt_f(r.mean_client_acc.std, 4),
            fmt_f(r.small_client_acc.mean, 4),
            fmt_f(r.small_client_acc.std, 4),
            fmt_f(r.avg_auc.mean, 6),
            fmt_f(r.avg_auc.std, 6),
        ])?;
    }
    write_atomic(&dir.join("summary.csv"), &w.into_inner().map_err(|e| e.into_error())?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "num_large_clients",
        "strategies",
        "delta_server_acc",
        "delta_mean_client_acc",
        "delta_avg_auc",
    ])?;
    for d in &summary.deltas {
        w.write_record([
            d.num_large_clients.to_string(),
            d.strategies.to_string(),
            fmt_f(d.server_acc, 4),
            fmt_f(d.mean_client_acc, 4),
            fmt_f(d.avg_auc, 6),
        ])?;
    }
    write_atomic(&dir.join("deltas.csv"), &w.into_inner().map_err(|e| e.into_error())?)?;
    Ok(summary)
}
