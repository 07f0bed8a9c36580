use serde::{Deserialize, Serialize};

use crate::channel_plan::{StrategyKind, StrategySpec};
use crate::data::Augment;
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::seed::SeedPath;

/// Per-client weight in integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    DatasetSize,
    Uniform,
}

/// What happens to a client's Adam moments between rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMode {
    /// Kept per server cell; a cell first visited starts from zero.
    #[default]
    Persistent,
    ResetEachRound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    pub num_clients: usize,
    pub num_large_clients: usize,
    pub server_u: usize,
    /// Small-client complexity; `server_u / 2` when absent.
    pub small_u: Option<usize>,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub adam: Adam,
    pub augment: Augment,
    pub strategy: StrategySpec,
    pub weighting: Weighting,
    pub moments: MomentMode,
    /// Evaluate every this many rounds; the last round is always evaluated.
    /// Zero means only the last round.
    pub eval_every: usize,
    /// Drives initialization and local shuffling. Channel plans use the
    /// strategy's own seed.
    pub seed: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            num_clients: 10,
            num_large_clients: 2,
            server_u: 4,
            small_u: None,
            rounds: 20,
            local_epochs: 1,
            batch_size: 32,
            adam: Adam::default(),
            augment: Augment::OFF,
            strategy: StrategySpec::new(StrategyKind::Ofm, 0),
            weighting: Weighting::default(),
            moments: MomentMode::default(),
            eval_every: 0,
            seed: 0,
        }
    }
}

impl FederationConfig {
    pub fn small_u(&self) -> usize {
        self.small_u.unwrap_or(self.server_u / 2)
    }

    pub fn init_seed(&self) -> u64 {
        SeedPath::root(self.seed).with("server-init").value()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::config("num_clients must be at least 1"));
        }
        if self.num_large_clients > self.num_clients {
            return Err(Error::config(format!(
                "num_large_clients {} exceeds num_clients {}",
                self.num_large_clients, self.num_clients
            )));
        }
        if self.server_u == 0 {
            return Err(Error::config("server_u must be at least 1"));
        }
        let small = self.small_u();
        if self.num_large_clients < self.num_clients && (small == 0 || small > self.server_u) {
            return Err(Error::config(format!(
                "small_u {small} must be in 1..={}",
                self.server_u
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("local_epochs must be positive"));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        self.strategy.validate()
    }
}
