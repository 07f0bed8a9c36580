use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::channel_plan::Group;
use crate::data::Partition;
use crate::error::Result;
use crate::federation::{ClientUpdateArchive, FederationConfig, FederationState, RoundMetrics};

/// Everything needed to reproduce a federation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: FederationConfig,
    pub init_seed: u64,
    pub partition_hash: String,
    pub partition_sizes: Vec<usize>,
    pub complexities: Vec<usize>,
    pub groups: Vec<Option<Group>>,
    pub rounds_completed: usize,
}

impl RunManifest {
    pub fn new(state: &FederationState, partition: &Partition) -> Self {
        RunManifest {
            config: state.config.clone(),
            init_seed: state.config.init_seed(),
            partition_hash: partition.content_hash(),
            partition_sizes: partition.sizes(),
            complexities: state.clients.iter().map(|c| c.complexity).collect(),
            groups: (0..state.clients.len()).map(|c| state.planner.group_of(c)).collect(),
            rounds_completed: state.round,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec_pretty(self)?)
    }
}

/// Metric log: `round, server_acc, mean_client_acc, mean_train_loss, client_0, ...`.
pub fn write_metrics(path: &Path, history: &[RoundMetrics]) -> Result<()> {
    let clients = history.first().map_or(0, |h| h.client_acc.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "round".to_string(),
        "server_acc".into(),
        "mean_client_acc".into(),
        "mean_train_loss".into(),
    ];
    header.extend((0..clients).map(|c| format!("client_{c}")));
    w.write_record(&header)?;
    for h in history {
        let mut row = vec![
            h.round.to_string(),
            format!("{:.4}", h.server_acc),
            format!("{:.4}", h.mean_client_acc),
            format!("{:.6}", h.mean_train_loss),
        ];
        row.extend(h.client_acc.iter().map(|a| format!("{a:.4}")));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

pub fn write_archive(path: &Path, archive: &ClientUpdateArchive) -> Result<()> {
    write_atomic(path, &serde_json::to_vec(archive)?)
}

pub fn read_archive(path: &Path) -> Result<ClientUpdateArchive> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}
