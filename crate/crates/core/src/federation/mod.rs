//! The federated protocol: each round every client receives its slice of the
//! server model, trains it locally with Adam and sends it back for
//! coverage-weighted integration.

mod config;
mod output;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_plan::{extract_submodel, integrate, ChannelPlan, ClientSlot, Planner, Update};
use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::nn::{AdamState, Architecture, ModelParams, ScaleRate};
use crate::seed::SeedPath;
use crate::train::{self, TrainSettings};

pub use config::{FederationConfig, MomentMode, Weighting};
pub use output::{read_archive, write_archive, write_metrics, RunManifest};

/// Data a federation trains and evaluates on.
#[derive(Debug, Clone, Copy)]
pub struct FederationData<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub partition: &'a Partition,
}

/// Adam moments of one client, stored in server coordinates so that they
/// survive plans that move the client to different channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ServerMoments {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: u64,
}

fn trainable_maps(plan: &ChannelPlan) -> Vec<Vec<usize>> {
    plan.cell_maps()
        .into_iter()
        .filter(|(k, _)| k.is_trainable())
        .map(|(_, m)| m)
        .collect()
}

impl ServerMoments {
    fn new(server: &ModelParams<f32>) -> Self {
        let s = AdamState::for_params(server);
        ServerMoments {
            m: s.m,
            v: s.v,
            step: 0,
        }
    }

    fn gather(&self, plan: &ChannelPlan) -> AdamState<f32> {
        let maps = trainable_maps(plan);
        let pick = |src: &[Vec<f32>]| -> Vec<Vec<f32>> {
            maps.iter()
                .zip(src)
                .map(|(map, t)| map.iter().map(|&i| t[i]).collect())
                .collect()
        };
        AdamState {
            m: pick(&self.m),
            v: pick(&self.v),
            step: self.step,
        }
    }

    fn scatter(&mut self, plan: &ChannelPlan, state: &AdamState<f32>) {
        for (t, map) in trainable_maps(plan).iter().enumerate() {
            for (j, &i) in map.iter().enumerate() {
                self.m[t][i] = state.m[t][j];
                self.v[t][i] = state.v[t][j];
            }
        }
        self.step = state.step;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    pub shard: Vec<usize>,
    pub complexity: usize,
    moments: ServerMoments,
}

impl ClientState {
    pub fn dataset_size(&self) -> usize {
        self.shard.len()
    }

    pub fn is_large(&self, server_u: usize) -> bool {
        self.complexity == server_u
    }
}

/// Accuracies recorded after one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub server_acc: f64,
    pub mean_client_acc: f64,
    pub client_acc: Vec<f64>,
    pub mean_train_loss: f64,
}

/// A client's final update `θ_c^T`, the attack surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedUpdate {
    pub client: usize,
    pub round: usize,
    pub complexity: usize,
    pub dataset_size: usize,
    pub plan: ChannelPlan,
    pub params: ModelParams<f32>,
}

impl ArchivedUpdate {
    pub fn scale_rate(&self) -> ScaleRate {
        self.plan.scale_rate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdateArchive {
    pub updates: Vec<ArchivedUpdate>,
}

#[derive(Debug, Clone)]
pub struct FederationState {
    pub config: FederationConfig,
    pub server: ModelParams<f32>,
    pub planner: Planner,
    pub clients: Vec<ClientState>,
    pub round: usize,
    pub history: Vec<RoundMetrics>,
}

/// What one client sends back after local training.
struct ClientOutcome {
    plan: ChannelPlan,
    params: ModelParams<f32>,
    adam: AdamState<f32>,
    loss: f64,
}

/// Client complexities: the `num_large_clients` biggest shards hold the server
/// size, the rest the small size. Ties in shard size go to the higher id.
pub fn assign_complexities(sizes: &[usize], num_large: usize, server_u: usize, small_u: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| (sizes[i], i));
    let mut out = vec![small_u; sizes.len()];
    for &i in order.iter().rev().take(num_large) {
        out[i] = server_u;
    }
    out
}

impl FederationState {
    pub fn new(config: FederationConfig, data: &FederationData<'_>) -> Result<Self> {
        config.validate()?;
        let n = data.partition.num_clients();
        if n != config.num_clients {
            return Err(Error::config(format!(
                "partition has {n} shards but num_clients is {}",
                config.num_clients
            )));
        }
        if data.train.classes != data.test.classes || data.train.image_len() != data.test.image_len() {
            return Err(Error::data("train and test sets differ in shape"));
        }
        let arch = Architecture::new(config.server_u, data.train.channels, data.train.classes)?;
        let server = ModelParams::init(&arch, config.init_seed());
        let sizes = data.partition.sizes();
        let complexity = assign_complexities(&sizes, config.num_large_clients, config.server_u, config.small_u());
        let slots: Vec<ClientSlot> = (0..n)
            .map(|id| ClientSlot {
                id,
                dataset_size: sizes[id],
                complexity: complexity[id],
            })
            .collect();
        let planner = Planner::new(config.strategy.clone(), arch, &slots)?;
        let clients = (0..n)
            .map(|id| ClientState {
                id,
                shard: data.partition.shards[id].clone(),
                complexity: complexity[id],
                moments: ServerMoments::new(&server),
            })
            .collect();
        Ok(FederationState {
            config,
            server,
            planner,
            clients,
            round: 0,
            history: Vec::new(),
        })
    }

    pub fn server_arch(&self) -> &Architecture {
        &self.server.arch
    }

    fn settings(&self) -> TrainSettings {
        TrainSettings {
            adam: self.config.adam,
            batch_size: self.config.batch_size,
            augment: self.config.augment,
        }
    }

    fn train_client(&self, client: &ClientState, train: &Dataset) -> Result<ClientOutcome> {
        let plan = self.planner.make_plan(client.id, self.round)?;
        let mut params = extract_submodel(&self.server, &plan)?;
        let mut adam = match self.config.moments {
            MomentMode::Persistent => client.moments.gather(&plan),
            MomentMode::ResetEachRound => AdamState::for_params(&params),
        };
        let seed = SeedPath::root(self.config.seed)
            .with("local")
            .index(client.id as u64)
            .index(self.round as u64);
        let loss = train::train_epochs(
            &mut params,
            &mut adam,
            train,
            &client.shard,
            plan.scale_rate(),
            self.config.local_epochs,
            &self.settings(),
            seed,
        )
        .map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!(
                "client {} round {}: {msg}",
                client.id, self.round
            )),
            other => other,
        })?;
        Ok(ClientOutcome {
            plan,
            params,
            adam,
            loss,
        })
    }

    fn weight(&self, client: &ClientState) -> f64 {
        match self.config.weighting {
            Weighting::DatasetSize => client.dataset_size().max(1) as f64,
            Weighting::Uniform => 1.0,
        }
    }
}

/// Top-1 accuracy in percent of `params` on `testset`.
pub fn evaluate(params: &ModelParams<f32>, rate: ScaleRate, testset: &Dataset) -> Result<f64> {
    train::evaluate(params, rate, testset)
}

/// One round: plan, extract, train every client (in parallel), integrate.
/// Returns each client's trained sub-model with its plan, in client order.
pub fn run_round(
    state: &mut FederationState,
    data: &FederationData<'_>,
) -> Result<Vec<(ChannelPlan, ModelParams<f32>)>> {
    let outcomes: Vec<ClientOutcome> = {
        let st = &*state;
        st.clients
            .par_iter()
            .map(|c| st.train_client(c, data.train))
            .collect::<Result<_>>()?
    };
    let updates: Vec<Update<'_, f32>> = outcomes
        .iter()
        .zip(&state.clients)
        .filter(|(_, c)| !c.shard.is_empty())
        .map(|(o, c)| Update {
            plan: &o.plan,
            params: &o.params,
            weight: state.weight(c),
        })
        .collect();
    let server = integrate(&state.server, &updates)?;
    if !server.all_finite() {
        return Err(Error::Numeric(format!("non-finite server parameters after round {}", state.round)));
    }
    state.server = server;
    for (c, o) in state.clients.iter_mut().zip(&outcomes) {
        if state.config.moments == MomentMode::Persistent {
            c.moments.scatter(&o.plan, &o.adam);
        }
    }

    let round = state.round;
    state.round += 1;
    let last = state.round == state.config.rounds;
    let every = state.config.eval_every;
    if last || (every > 0 && state.round.is_multiple_of(every)) {
        let server_acc = evaluate(&state.server, ScaleRate::FULL, data.test)?;
        let client_acc = outcomes
            .par_iter()
            .map(|o| evaluate(&o.params, o.plan.scale_rate(), data.test))
            .collect::<Result<Vec<f64>>>()?;
        let mean_client_acc = client_acc.iter().sum::<f64>() / client_acc.len() as f64;
        let mean_train_loss = outcomes.iter().map(|o| o.loss).sum::<f64>() / outcomes.len() as f64;
        debug!("round {round}: server {server_acc:.2}% clients {mean_client_acc:.2}% loss {mean_train_loss:.4}");
        state.history.push(RoundMetrics {
            round,
            server_acc,
            mean_client_acc,
            client_acc,
            mean_train_loss,
        });
    }
    Ok(outcomes.into_iter().map(|o| (o.plan, o.params)).collect())
}

/// Runs every configured round and archives each client's last update.
pub fn run_federation(
    config: FederationConfig,
    data: &FederationData<'_>,
) -> Result<(FederationState, ClientUpdateArchive)> {
    let mut state = FederationState::new(config, data)?;
    let mut last = Vec::new();
    for _ in 0..state.config.rounds {
        last = run_round(&mut state, data)?;
    }
    let round = state.round.saturating_sub(1);
    let updates = last
        .into_iter()
        .zip(&state.clients)
        .map(|((plan, params), c)| ArchivedUpdate {
            client: c.id,
            round,
            complexity: c.complexity,
            dataset_size: c.dataset_size(),
            plan,
            params,
        })
        .collect();
    Ok((state, ClientUpdateArchive { updates }))
}
