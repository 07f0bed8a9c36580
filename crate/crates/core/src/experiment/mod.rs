//! Experiment grids over strategies, client mixes and repeats, with
//! resumable per-cell outputs and summary tables.

mod config;
mod results;
mod summary;

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::attacks::{
    attack_suite, write_reports_csv, write_reports_json, AttackData, AttackReport, AttackTarget, ShadowBank,
    ShadowBudget,
};
use crate::channel_plan::{repeat_frequency, ClientSlot, PlanRecord, Planner, StrategySpec};
use crate::data::{dirichlet_partition, Dataset, Partition};
use crate::error::{Error, Result};
use crate::federation::{
    read_archive, run_federation, write_archive, write_metrics, ClientUpdateArchive, FederationConfig,
    FederationData, RunManifest,
};
use crate::nn::Architecture;
use crate::train::TrainSettings;

pub use config::{Cell, DatasetSpec, ExperimentConfig};
pub use results::{read_results_csv, write_results_csv, ClientResult, ResultRecord, ResultRow, RESULT_COLUMNS};
pub use summary::{pearson_log_corr, summarize, summarize_records, DeltaRow, Stat, Summary, SummaryRow};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "HETFL_OUT_DIR";

/// Output directory for an experiment: `explicit` if given, else
/// `$HETFL_OUT_DIR/<name>`, else `runs/<name>`.
pub fn resolve_out_dir(explicit: Option<&Path>, name: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    let root = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(name)
}

/// Accuracies and client layout of a finished federation, kept so attacks can
/// be rerun without retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FederationSummary {
    server_acc: f64,
    client_acc: Vec<f64>,
    sizes: Vec<usize>,
    complexities: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: Cell,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

struct Workspace<'a> {
    cfg: &'a ExperimentConfig,
    train: Dataset,
    test: Dataset,
    partitions: Vec<Partition>,
    out: PathBuf,
}

fn cell_repeat_frequency(cfg: &FederationConfig) -> f64 {
    let n = cfg.server_u;
    let nc = cfg.small_u();
    repeat_frequency(cfg.strategy.kind, n, nc, cfg.num_clients)
}

fn median_nonzero(sizes: &[usize]) -> usize {
    let mut s: Vec<usize> = sizes.iter().copied().filter(|&x| x > 0).collect();
    s.sort_unstable();
    if s.is_empty() {
        1
    } else {
        s[s.len() / 2]
    }
}

impl Workspace<'_> {
    fn cell_dir(&self, cell: &Cell) -> PathBuf {
        self.out.join("cells").join(cell.dir_name())
    }

    fn data(&self, repeat: usize) -> FederationData<'_> {
        FederationData {
            train: &self.train,
            test: &self.test,
            partition: &self.partitions[repeat],
        }
    }

    fn attack(&self, cell: &Cell, fed: &FederationConfig, archive: &ClientUpdateArchive) -> Result<Vec<AttackReport>> {
        let acfg = &self.cfg.attacks;
        let partition = &self.partitions[cell.repeat];
        let targets: Vec<_> = archive
            .updates
            .iter()
            .filter(|u| u.dataset_size >= acfg.min_client_size.max(1))
            .collect();
        if targets.is_empty() || acfg.enabled().is_empty() {
            return Ok(Vec::new());
        }
        let data = AttackData {
            train: &self.train,
            test: &self.test,
        };
        let budget = ShadowBudget {
            epochs: fed.rounds * fed.local_epochs,
            subset_size: median_nonzero(&partition.sizes()),
            server_u: fed.server_u,
            settings: TrainSettings {
                adam: fed.adam,
                batch_size: fed.batch_size,
                augment: fed.augment,
            },
        };
        let sizes: Vec<usize> = targets.iter().map(|u| u.params.arch.widths[0]).collect();
        let seed = self.cfg.attack_seed(cell.repeat);
        let bank = ShadowBank::build(&data, &sizes, &budget, acfg, seed)?;
        targets
            .par_iter()
            .map(|u| {
                let target = AttackTarget {
                    client: u.client,
                    params: &u.params,
                    rate: u.scale_rate(),
                    members: &partition.shards[u.client],
                };
                attack_suite(&target, &data, &bank, acfg, seed)
            })
            .collect()
    }

    fn finish_cell(
        &self,
        cell: &Cell,
        fed: &FederationConfig,
        summary: &FederationSummary,
        reports: &[AttackReport],
    ) -> Result<ResultRow> {
        let dir = self.cell_dir(cell);
        write_reports_csv(&dir.join("attacks.csv"), reports)?;
        write_reports_json(&dir.join("attacks.json"), reports)?;
        let row = ResultRow::new(
            cell.strategy,
            cell.num_large_clients,
            cell.repeat,
            cell_repeat_frequency(fed),
            summary.server_acc,
            &summary.client_acc,
            &summary.sizes,
            &summary.complexities,
            fed.server_u,
            reports,
        );
        write_atomic(&dir.join("row.json"), &serde_json::to_vec_pretty(&row)?)?;
        Ok(row)
    }

    fn run_cell(&self, cell: &Cell) -> Result<ResultRow> {
        let dir = self.cell_dir(cell);
        let row_path = dir.join("row.json");
        if row_path.exists() {
            if let Ok(row) = serde_json::from_slice::<ResultRow>(&fs::read(&row_path)?) {
                info!("{}: already complete", cell.dir_name());
                return Ok(row);
            }
        }
        info!("{}: training", cell.dir_name());
        let fed = self.cfg.cell_federation(cell);
        let data = self.data(cell.repeat);
        let (state, archive) = run_federation(fed.clone(), &data)?;
        let last = state
            .history
            .last()
            .ok_or_else(|| Error::config("experiments need at least one round"))?;
        let summary = FederationSummary {
            server_acc: last.server_acc,
            client_acc: last.client_acc.clone(),
            sizes: state.clients.iter().map(|c| c.dataset_size()).collect(),
            complexities: state.clients.iter().map(|c| c.complexity).collect(),
        };
        RunManifest::new(&state, data.partition).write(&dir.join("manifest.json"))?;
        write_metrics(&dir.join("metrics.csv"), &state.history)?;
        write_archive(&dir.join("archive.json"), &archive)?;
        write_atomic(&dir.join("federation.json"), &serde_json::to_vec_pretty(&summary)?)?;
        let reports = if self.cfg.run_attacks {
            info!("{}: attacking", cell.dir_name());
            self.attack(cell, &fed, &archive)?
        } else {
            Vec::new()
        };
        self.finish_cell(cell, &fed, &summary, &reports)
    }

    fn reattack_cell(&self, cell: &Cell) -> Result<Option<ResultRow>> {
        let dir = self.cell_dir(cell);
        let (arch_path, fed_path) = (dir.join("archive.json"), dir.join("federation.json"));
        if !arch_path.exists() || !fed_path.exists() {
            return Ok(None);
        }
        let archive = read_archive(&arch_path)?;
        let summary: FederationSummary = serde_json::from_slice(&fs::read(&fed_path)?)?;
        let fed = self.cfg.cell_federation(cell);
        let reports = self.attack(cell, &fed, &archive)?;
        self.finish_cell(cell, &fed, &summary, &reports).map(Some)
    }
}

fn open_workspace<'a>(cfg: &'a ExperimentConfig, out: &Path) -> Result<Workspace<'a>> {
    cfg.validate()?;
    let (train, test) = cfg.dataset.load()?;
    let partitions = (0..cfg.repeats)
        .map(|r| dirichlet_partition(&train, cfg.federation.num_clients, cfg.alpha, cfg.partition_seed(r)))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    for (r, p) in partitions.iter().enumerate() {
        let path = out.join("partitions").join(format!("repeat_{r}.json"));
        write_atomic(&path, &serde_json::to_vec(p)?)?;
    }
    Ok(Workspace {
        cfg,
        train,
        test,
        partitions,
        out: out.to_path_buf(),
    })
}

fn run_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn collect_outcome(
    ws: &Workspace<'_>,
    cells: &[Cell],
    results: Vec<Result<Option<ResultRow>>>,
) -> Result<ExperimentOutcome> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (cell, res) in cells.iter().zip(results) {
        match res {
            Ok(Some(row)) => rows.push(row),
            Ok(None) => {}
            Err(e) => {
                warn!("{} failed: {e}", cell.dir_name());
                failures.push(CellFailure {
                    cell: *cell,
                    error: e.to_string(),
                });
            }
        }
    }
    write_results_csv(&ws.out.join("results.csv"), &rows)?;
    write_atomic(&ws.out.join("failures.json"), &serde_json::to_vec_pretty(&failures)?)?;
    Ok(ExperimentOutcome {
        out_dir: ws.out.clone(),
        rows,
        failures,
    })
}

/// Runs every cell not yet completed under `out`, at most `jobs` at a time,
/// then writes `results.csv`. A failing cell is recorded in `failures.json`
/// without stopping the others.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<ExperimentOutcome> {
    let ws = open_workspace(cfg, out)?;
    write_atomic(&out.join("experiment.json"), &serde_json::to_vec_pretty(cfg)?)?;
    let cells = cfg.cells();
    let results: Vec<Result<Option<ResultRow>>> =
        run_pool(jobs, || cells.par_iter().map(|c| ws.run_cell(c).map(Some)).collect())?;
    collect_outcome(&ws, &cells, results)
}

/// Re-runs the attacks of every trained cell in an existing run directory.
pub fn attack_run(dir: &Path, jobs: usize) -> Result<ExperimentOutcome> {
    let cfg: ExperimentConfig = serde_json::from_slice(&fs::read(dir.join("experiment.json"))?)?;
    let ws = open_workspace(&cfg, dir)?;
    let cells = cfg.cells();
    let results = run_pool(jobs, || cells.par_iter().map(|c| ws.reattack_cell(c)).collect())?;
    collect_outcome(&ws, &cells, results)
}

/// Plans of every client for rounds `0..rounds` in a federation whose client
/// `i` has the `i`-th smallest dataset and whose `num_large` biggest clients
/// hold the server model.
pub fn plan_dump(
    strategy: StrategySpec,
    rounds: usize,
    num_clients: usize,
    num_large: usize,
    server_u: usize,
) -> Result<Vec<PlanRecord>> {
    if num_large > num_clients {
        return Err(Error::config("more large clients than clients"));
    }
    let fed = FederationConfig {
        num_clients,
        num_large_clients: num_large,
        server_u,
        ..FederationConfig::default()
    };
    let arch = Architecture::new(server_u, 3, 10)?;
    let slots: Vec<ClientSlot> = (0..num_clients)
        .map(|id| ClientSlot {
            id,
            dataset_size: id + 1,
            complexity: if id + num_large >= num_clients {
                server_u
            } else {
                fed.small_u()
            },
        })
        .collect();
    let planner = Planner::new(strategy, arch, &slots)?;
    let mut out = Vec::with_capacity(rounds * num_clients);
    for round in 0..rounds {
        for c in 0..num_clients {
            out.push(planner.make_plan(c, round)?.record(c, round));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_plan::StrategyKind;

    #[test]
    fn plan_dump_shapes() {
        let recs = plan_dump(StrategySpec::new(StrategyKind::Ofm, 0), 3, 4, 1, 4).unwrap();
        assert_eq!(recs.len(), 12);
        assert_eq!(recs[0].blocks["0"], vec![0, 1]);
        assert_eq!(recs[3].blocks["0"], vec![0, 1, 2, 3]);
    }

    #[test]
    fn out_dir_prefers_explicit() {
        assert_eq!(resolve_out_dir(Some(Path::new("/x")), "n"), PathBuf::from("/x"));
    }

    #[test]
    fn median_ignores_empty_shards() {
        assert_eq!(median_nonzero(&[0, 5, 1, 9]), 5);
        assert_eq!(median_nonzero(&[0, 0]), 1);
    }
}
