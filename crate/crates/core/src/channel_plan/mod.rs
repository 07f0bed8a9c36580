//! Channel selection: which server channels each client's narrower model
//! occupies, how sub-models are cut out of the server model, and how client
//! updates are merged back.

mod plan;
mod planner;
mod strategy;

pub use plan::{coverage_counts, extract_submodel, integrate, ChannelPlan, PlanRecord, Update};
pub use planner::{ClientSlot, Group, Planner};
pub use strategy::{
    repeat_frequency, Coupling, Coverage, Dynamics, GroupPlacement, OsmSchedule, Policy,
    StrategyKind, StrategySpec,
};
