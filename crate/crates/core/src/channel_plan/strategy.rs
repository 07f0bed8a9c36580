use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel-selection strategy for clients whose model is narrower than the server's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "OFM")]
    Ofm,
    #[serde(rename = "OFR")]
    Ofr,
    #[serde(rename = "OSM")]
    Osm,
    #[serde(rename = "OSR")]
    Osr,
    #[serde(rename = "GFM")]
    Gfm,
    #[serde(rename = "GFR")]
    Gfr,
    #[serde(rename = "GSR")]
    Gsr,
    #[serde(rename = "UFR")]
    Ufr,
    #[serde(rename = "USR")]
    Usr,
    #[serde(rename = "FULL")]
    Full,
}

/// How many distinct channel sets the small clients are spread over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    One,
    Groups,
    Unique,
}

/// Whether a client's channel set is fixed at the start or redrawn each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    Fixed,
    Sampled,
}

/// Contiguous sub-matrix blocks versus random channel subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    SubMatrix,
    Random,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 10] = [
        StrategyKind::Ofm,
        StrategyKind::Ofr,
        StrategyKind::Osm,
        StrategyKind::Osr,
        StrategyKind::Gfm,
        StrategyKind::Gfr,
        StrategyKind::Gsr,
        StrategyKind::Ufr,
        StrategyKind::Usr,
        StrategyKind::Full,
    ];

    /// The nine heterogeneous strategies, without `FULL`.
    pub const HETEROGENEOUS: [StrategyKind; 9] = [
        StrategyKind::Ofm,
        StrategyKind::Ofr,
        StrategyKind::Osm,
        StrategyKind::Osr,
        StrategyKind::Gfm,
        StrategyKind::Gfr,
        StrategyKind::Gsr,
        StrategyKind::Ufr,
        StrategyKind::Usr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Ofm => "OFM",
            StrategyKind::Ofr => "OFR",
            StrategyKind::Osm => "OSM",
            StrategyKind::Osr => "OSR",
            StrategyKind::Gfm => "GFM",
            StrategyKind::Gfr => "GFR",
            StrategyKind::Gsr => "GSR",
            StrategyKind::Ufr => "UFR",
            StrategyKind::Usr => "USR",
            StrategyKind::Full => "FULL",
        }
    }

    /// Taxonomy axes; `None` for `FULL`, where every client holds the whole model.
    pub fn axes(self) -> Option<(Coverage, Dynamics, Policy)> {
        use Coverage::*;
        use Dynamics::*;
        use Policy::*;
        Some(match self {
            StrategyKind::Ofm => (One, Fixed, SubMatrix),
            StrategyKind::Ofr => (One, Fixed, Random),
            StrategyKind::Osm => (One, Sampled, SubMatrix),
            StrategyKind::Osr => (One, Sampled, Random),
            StrategyKind::Gfm => (Groups, Fixed, SubMatrix),
            StrategyKind::Gfr => (Groups, Fixed, Random),
            StrategyKind::Gsr => (Groups, Sampled, Random),
            StrategyKind::Ufr => (Unique, Fixed, Random),
            StrategyKind::Usr => (Unique, Sampled, Random),
            StrategyKind::Full => return None,
        })
    }

    pub fn coverage(self) -> Option<Coverage> {
        self.axes().map(|a| a.0)
    }

    pub fn dynamics(self) -> Option<Dynamics> {
        self.axes().map(|a| a.1)
    }

    pub fn policy(self) -> Option<Policy> {
        self.axes().map(|a| a.2)
    }

    /// Kinds built on the four half-width groups (all G-kinds plus OSM).
    pub fn uses_half_groups(self) -> bool {
        matches!(self.coverage(), Some(Coverage::Groups)) || self == StrategyKind::Osm
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let upper = match upper.as_str() {
            "HETEROFL" => "OFM",
            "FDROPOUT" => "USR",
            "FEDAVG" => "FULL",
            other => other,
        };
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == upper)
            .ok_or_else(|| Error::config(format!("unknown strategy {s:?}")))
    }
}

/// Round → group schedule for OSM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OsmSchedule {
    #[default]
    Cyclic,
    Sampled,
}

/// How small clients are placed into the four groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupPlacement {
    /// Round-robin over small clients ordered by dataset size.
    #[default]
    BySize,
    /// Round-robin over a seeded shuffle of the small clients.
    Shuffled,
}

/// Whether a block's input channels follow the previous block's output channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    #[default]
    LayerWise,
    /// Inputs drawn independently of the previous block (random policies only).
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    #[serde(default = "default_groups")]
    pub group_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub osm_schedule: OsmSchedule,
    #[serde(default)]
    pub placement: GroupPlacement,
    #[serde(default)]
    pub coupling: Coupling,
}

fn default_groups() -> usize {
    4
}

impl StrategySpec {
    pub fn new(kind: StrategyKind, seed: u64) -> Self {
        StrategySpec {
            kind,
            group_count: 4,
            seed,
            osm_schedule: OsmSchedule::default(),
            placement: GroupPlacement::default(),
            coupling: Coupling::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_count != 4 {
            return Err(Error::config(format!(
                "group_count must be 4, got {}",
                self.group_count
            )));
        }
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Expected number of rounds between a client receiving the same channel set
/// twice, for a block with server width `n` and client width `n_c`.
pub fn repeat_frequency(kind: StrategyKind, n: usize, n_c: usize, federation_size: usize) -> f64 {
    match kind {
        StrategyKind::Ofm
        | StrategyKind::Ofr
        | StrategyKind::Gfm
        | StrategyKind::Gfr
        | StrategyKind::Full => 1.0,
        StrategyKind::Ufr => federation_size as f64,
        StrategyKind::Osm => 4.0,
        StrategyKind::Osr | StrategyKind::Gsr | StrategyKind::Usr => binomial(n, n_c),
    }
}
