use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::channel_plan::plan::ChannelPlan;
use crate::channel_plan::strategy::{
    Coupling, GroupPlacement, OsmSchedule, Policy, StrategyKind, StrategySpec,
};
use crate::error::{Error, Result};
use crate::nn::model::WIDTH_MULTIPLIERS;
use crate::nn::{Architecture, NUM_BLOCKS};
use crate::seed::SeedPath;

/// The four half-width groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    O,
    P,
    Q,
    R,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::O, Group::P, Group::Q, Group::R];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether the group takes the first half of output channels in the
    /// given (0-based) block. O always does and R never does; P and Q
    /// alternate in opposite phase so that a block reading the second half of
    /// its inputs is followed by one reading the first half.
    pub fn takes_top(self, block: usize) -> bool {
        let odd_layer = block.is_multiple_of(2); // layers are numbered from 1
        match self {
            Group::O => true,
            Group::R => false,
            Group::P => odd_layer,
            Group::Q => !odd_layer,
        }
    }
}

/// A federation member as seen by the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientSlot {
    pub id: usize,
    pub dataset_size: usize,
    pub complexity: usize,
}

/// Builds channel plans for every (client, round) of one federation.
///
/// Everything random is drawn from streams keyed by the strategy seed and the
/// (round, group, client) the plan is for, so any plan can be rebuilt in
/// isolation and in any order.
#[derive(Debug, Clone)]
pub struct Planner {
    spec: StrategySpec,
    server: Architecture,
    server_u: usize,
    clients: Vec<ClientSlot>,
    groups: Vec<Option<Group>>,
    fixed: Vec<Vec<Vec<usize>>>,
}

fn sorted_sample(n: usize, k: usize, seed: SeedPath) -> Vec<usize> {
    let mut v = index::sample(&mut seed.rng(), n, k).into_vec();
    v.sort_unstable();
    v
}

impl Planner {
    pub fn new(spec: StrategySpec, server: Architecture, clients: &[ClientSlot]) -> Result<Self> {
        spec.validate()?;
        let server_u = server
            .complexity()
            .ok_or_else(|| Error::config("server widths are not (u, 2u, 4u, 8u)"))?;
        for (pos, c) in clients.iter().enumerate() {
            if c.id != pos {
                return Err(Error::config("client ids must be 0..n in order"));
            }
            if c.complexity == 0 || c.complexity > server_u {
                return Err(Error::config(format!(
                    "client {} complexity {} outside 1..={server_u}",
                    c.id, c.complexity
                )));
            }
            if c.complexity < server_u {
                if spec.kind == StrategyKind::Full {
                    return Err(Error::config("FULL requires every client at server size"));
                }
                if spec.kind.uses_half_groups() && 2 * c.complexity != server_u {
                    return Err(Error::config(format!(
                        "{} needs small clients at half the server complexity ({}), got {}",
                        spec.kind,
                        server_u / 2,
                        c.complexity
                    )));
                }
            }
        }

        let mut small: Vec<&ClientSlot> = clients.iter().filter(|c| c.complexity < server_u).collect();
        small.sort_by_key(|c| (c.dataset_size, c.id));
        if spec.placement == GroupPlacement::Shuffled {
            small.shuffle(&mut SeedPath::root(spec.seed).with("placement").rng());
        }
        let mut groups = vec![None; clients.len()];
        for (rank, c) in small.iter().enumerate() {
            groups[c.id] = Some(Group::ALL[rank % 4]);
        }

        let mut planner = Planner {
            spec,
            server,
            server_u,
            clients: clients.to_vec(),
            groups,
            fixed: Vec::new(),
        };
        if planner.spec.kind == StrategyKind::Ufr {
            planner.fixed = planner.unique_sets();
        }
        Ok(planner)
    }

    pub fn spec(&self) -> &StrategySpec {
        &self.spec
    }

    pub fn group_of(&self, client: usize) -> Option<Group> {
        self.groups.get(client).copied().flatten()
    }

    fn small_widths(&self) -> Option<[usize; NUM_BLOCKS]> {
        self.clients
            .iter()
            .find(|c| c.complexity < self.server_u)
            .map(|c| WIDTH_MULTIPLIERS.map(|m| m * c.complexity))
    }

    fn seed(&self) -> SeedPath {
        SeedPath::root(self.spec.seed).with(self.spec.kind.name())
    }

    fn group_outputs(&self, group: Group, widths: &[usize; NUM_BLOCKS]) -> Vec<Vec<usize>> {
        (0..NUM_BLOCKS)
            .map(|b| {
                let (n, k) = (self.server.widths[b], widths[b]);
                if group.takes_top(b) {
                    (0..k).collect()
                } else {
                    (n - k..n).collect()
                }
            })
            .collect()
    }

    fn random_outputs(&self, widths: &[usize; NUM_BLOCKS], seed: SeedPath) -> Vec<Vec<usize>> {
        (0..NUM_BLOCKS)
            .map(|b| sorted_sample(self.server.widths[b], widths[b], seed.index(b as u64)))
            .collect()
    }

    fn random_plan(&self, widths: &[usize; NUM_BLOCKS], seed: SeedPath) -> Result<ChannelPlan> {
        let outputs = self.random_outputs(widths, seed);
        match self.spec.coupling {
            Coupling::LayerWise => ChannelPlan::coupled(&self.server, outputs),
            Coupling::Independent => {
                let ins = seed.with("inputs");
                let mut inputs = vec![(0..self.server.image_channels).collect()];
                for b in 1..NUM_BLOCKS {
                    inputs.push(sorted_sample(
                        self.server.widths[b - 1],
                        widths[b - 1],
                        ins.index(b as u64),
                    ));
                }
                let dense = sorted_sample(
                    self.server.dense_inputs(),
                    widths[NUM_BLOCKS - 1],
                    ins.index(NUM_BLOCKS as u64),
                );
                ChannelPlan::independent(&self.server, outputs, inputs, dense)
            }
        }
    }

    /// `C` distinct random channel sets, one per federation member.
    fn unique_sets(&self) -> Vec<Vec<Vec<usize>>> {
        let Some(widths) = self.small_widths() else {
            return Vec::new();
        };
        let seed = self.seed().with("sets");
        let mut sets: Vec<Vec<Vec<usize>>> = Vec::with_capacity(self.clients.len());
        for k in 0..self.clients.len() {
            let mut attempt = 0u64;
            loop {
                let cand = self.random_outputs(&widths, seed.index(k as u64).index(attempt));
                attempt += 1;
                if !sets.contains(&cand) || attempt > 64 {
                    sets.push(cand);
                    break;
                }
            }
        }
        sets
    }

    fn osm_group(&self, round: usize) -> Group {
        match self.spec.osm_schedule {
            OsmSchedule::Cyclic => Group::ALL[round % 4],
            OsmSchedule::Sampled => {
                Group::ALL[self.seed().with("osm").index(round as u64).rng().gen_range(0..4)]
            }
        }
    }

    /// Index of the fixed UFR channel set `client` holds in `round`.
    pub fn ufr_set_index(&self, client: usize, round: usize) -> usize {
        (client + round) % self.clients.len().max(1)
    }

    /// Channel plan for `client` in `round`.
    pub fn make_plan(&self, client: usize, round: usize) -> Result<ChannelPlan> {
        let slot = self
            .clients
            .get(client)
            .ok_or_else(|| Error::config(format!("unknown client {client}")))?;
        if slot.complexity == self.server_u {
            return Ok(ChannelPlan::full(&self.server));
        }
        let widths = WIDTH_MULTIPLIERS.map(|m| m * slot.complexity);
        let seed = self.seed();
        let r = round as u64;
        let group = || {
            self.group_of(client)
                .ok_or_else(|| Error::config(format!("client {client} has no group")))
        };
        let subm = |g: Group| ChannelPlan::coupled(&self.server, self.group_outputs(g, &widths));
        match self.spec.kind {
            StrategyKind::Full => Err(Error::config("FULL requires every client at server size")),
            StrategyKind::Ofm => subm(Group::O),
            StrategyKind::Osm => subm(self.osm_group(round)),
            StrategyKind::Gfm => subm(group()?),
            StrategyKind::Ofr => self.random_plan(&widths, seed.with("fixed")),
            StrategyKind::Osr => self.random_plan(&widths, seed.with("round").index(r)),
            StrategyKind::Gfr => self.random_plan(&widths, seed.with("group").index(group()?.index() as u64)),
            StrategyKind::Gsr => self.random_plan(
                &widths,
                seed.with("round").index(r).with("group").index(group()?.index() as u64),
            ),
            StrategyKind::Usr => self.random_plan(
                &widths,
                seed.with("round").index(r).with("client").index(client as u64),
            ),
            StrategyKind::Ufr => {
                let outputs = self.fixed[self.ufr_set_index(client, round)].clone();
                ChannelPlan::coupled(&self.server, outputs)
            }
        }
    }

    pub fn policy(&self) -> Option<Policy> {
        self.spec.kind.policy()
    }
}
