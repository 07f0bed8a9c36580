use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::AttackConfig;
use crate::channel_plan::StrategyKind;
use crate::data::{load_cifar10_dir, synthetic_dataset, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::federation::FederationConfig;
use crate::seed::SeedPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    /// Directory holding the CIFAR-10 binary batches.
    Cifar10 { path: PathBuf },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic(SyntheticSpec::default())
    }
}

impl DatasetSpec {
    /// Train and test sets.
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSpec::Synthetic(spec) => synthetic_dataset(spec),
            DatasetSpec::Cifar10 { path } => load_cifar10_dir(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    /// Dirichlet concentration of the client partition.
    pub alpha: f64,
    /// Template for every cell. `strategy.kind`, `num_large_clients` and the
    /// seeds are filled in per cell.
    pub federation: FederationConfig,
    pub strategies: Vec<StrategyKind>,
    /// Numbers of large (server-size) clients to run.
    pub mixes: Vec<usize>,
    pub repeats: usize,
    pub run_attacks: bool,
    pub attacks: AttackConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            dataset: DatasetSpec::default(),
            alpha: 0.85,
            federation: FederationConfig::default(),
            strategies: StrategyKind::ALL.to_vec(),
            mixes: vec![2],
            repeats: 1,
            run_attacks: true,
            attacks: AttackConfig::default(),
            seed: 0,
        }
    }
}

/// One independent unit of work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub strategy: StrategyKind,
    pub num_large_clients: usize,
    pub repeat: usize,
}

impl Cell {
    pub fn dir_name(&self) -> String {
        format!("{}_L{}_r{}", self.strategy.name(), self.num_large_clients, self.repeat)
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::config("strategy list is empty"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats must be at least 1"));
        }
        if self.mixes.is_empty() {
            return Err(Error::config("mix list is empty"));
        }
        for &m in &self.mixes {
            if m > self.federation.num_clients {
                return Err(Error::config(format!(
                    "mix with {m} large clients exceeds {} clients",
                    self.federation.num_clients
                )));
            }
        }
        self.federation.validate()
    }

    /// Every cell in output order. `FULL` trains only server-size models, so
    /// it runs once per repeat with every client large.
    pub fn cells(&self) -> Vec<Cell> {
        let mut mixes = self.mixes.clone();
        mixes.dedup();
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            let strategy_mixes = if strategy == StrategyKind::Full {
                vec![self.federation.num_clients]
            } else {
                mixes.clone()
            };
            for &num_large_clients in &strategy_mixes {
                for repeat in 0..self.repeats {
                    out.push(Cell {
                        strategy,
                        num_large_clients,
                        repeat,
                    });
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    fn repeat_seed(&self, repeat: usize) -> SeedPath {
        SeedPath::root(self.seed).with("repeat").index(repeat as u64)
    }

    /// Partition seed; shared by every strategy and mix of a repeat.
    pub fn partition_seed(&self, repeat: usize) -> u64 {
        self.repeat_seed(repeat).with("partition").value()
    }

    /// Seeds of the federation (initialization, local shuffling) and of the
    /// attacks; shared by every strategy and mix of a repeat.
    pub fn federation_seed(&self, repeat: usize) -> u64 {
        self.repeat_seed(repeat).with("federation").value()
    }

    pub fn attack_seed(&self, repeat: usize) -> SeedPath {
        self.repeat_seed(repeat).with("attacks")
    }

    /// Channel-plan seed, keyed by strategy name so adding a strategy never
    /// changes another's plans.
    pub fn strategy_seed(&self, strategy: StrategyKind, repeat: usize) -> u64 {
        self.repeat_seed(repeat).with("strategy").with(strategy.name()).value()
    }

    pub fn cell_federation(&self, cell: &Cell) -> FederationConfig {
        let mut f = self.federation.clone();
        f.num_large_clients = cell.num_large_clients;
        f.seed = self.federation_seed(cell.repeat);
        f.strategy.kind = cell.strategy;
        f.strategy.seed = self.strategy_seed(cell.strategy, cell.repeat);
        f
    }
}
