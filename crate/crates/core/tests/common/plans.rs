//! Channel-plan invariants for one randomized (strategy, seed, round, width)
//! case. Expected layouts are written out from the strategy definitions, not
//! taken from the planner.

use std::collections::{BTreeMap, BTreeSet};

use hetfl::channel_plan::{extract_submodel, integrate, ChannelPlan, ClientSlot, Planner, StrategyKind, StrategySpec, Update};
use hetfl::nn::{Architecture, ModelParams, NUM_BLOCKS};
use hetfl::seed::SeedPath;
use rand::Rng as _;

pub const CLIENTS: usize = 10;
pub const LARGE: usize = 2;

/// Whether the half-width group with rank `g` (O, P, Q, R) takes the top half
/// of block `b`: O always, R never, P at blocks 1 and 3 (1-based), Q at 2 and 4.
fn quadrant_top(g: usize, b: usize) -> bool {
    const TABLE: [[bool; NUM_BLOCKS]; 4] = [
        [true, true, true, true],
        [true, false, true, false],
        [false, true, false, true],
        [false, false, false, false],
    ];
    TABLE[g][b]
}

fn half(n: usize, top: bool) -> Vec<usize> {
    if top {
        (0..n / 2).collect()
    } else {
        (n / 2..n).collect()
    }
}

fn outputs(p: &ChannelPlan) -> Vec<Vec<usize>> {
    (0..NUM_BLOCKS).map(|b| p.outputs(b).to_vec()).collect()
}

/// Client sizes drawn from the case seed; the `LARGE` biggest hold full models.
pub fn slots(seed: u64, server_u: usize) -> Vec<ClientSlot> {
    let mut rng = SeedPath::root(seed).with("sizes").rng();
    let sizes: Vec<usize> = (0..CLIENTS).map(|_| rng.gen_range(1..2000)).collect();
    let mut order: Vec<usize> = (0..CLIENTS).collect();
    order.sort_by_key(|&i| (sizes[i], i));
    let large: BTreeSet<usize> = order.iter().rev().take(LARGE).copied().collect();
    (0..CLIENTS)
        .map(|id| ClientSlot {
            id,
            dataset_size: sizes[id],
            complexity: if large.contains(&id) { server_u } else { server_u / 2 },
        })
        .collect()
}

/// Rank of every small client when sorted by (size, id), modulo 4.
fn expected_groups(slots: &[ClientSlot], server_u: usize) -> BTreeMap<usize, usize> {
    let mut small: Vec<&ClientSlot> = slots.iter().filter(|c| c.complexity < server_u).collect();
    small.sort_by_key(|c| (c.dataset_size, c.id));
    small.iter().enumerate().map(|(rank, c)| (c.id, rank % 4)).collect()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Structural checks every plan must pass.
fn well_formed(p: &ChannelPlan, server: &Architecture, u: usize) -> Result<(), String> {
    for b in 0..NUM_BLOCKS {
        let want = server.widths[b] / server.widths[0] * u;
        let out = p.outputs(b);
        check(out.len() == want, || format!("block {b}: {} outputs, want {want}", out.len()))?;
        check(out.windows(2).all(|w| w[0] < w[1]), || format!("block {b}: outputs not sorted"))?;
        check(out.iter().all(|&i| i < server.widths[b]), || format!("block {b}: output out of range"))?;
        let expect_in: Vec<usize> = if b == 0 {
            (0..server.image_channels).collect()
        } else {
            p.outputs(b - 1).to_vec()
        };
        check(p.inputs(b) == expect_in.as_slice(), || format!("block {b}: inputs not coupled"))?;
    }
    check(p.dense_inputs() == p.outputs(NUM_BLOCKS - 1), || "dense inputs not coupled".into())
}

/// Extracting every plan and integrating the unchanged sub-models must give
/// back the server bit for bit.
fn round_trip(server: &ModelParams<f32>, plans: &[ChannelPlan]) -> Result<(), String> {
    let subs: Vec<ModelParams<f32>> = plans
        .iter()
        .map(|p| extract_submodel(server, p).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let updates: Vec<Update<'_, f32>> = plans
        .iter()
        .zip(&subs)
        .enumerate()
        .map(|(i, (plan, params))| Update {
            plan,
            params,
            weight: (i + 1) as f64,
        })
        .collect();
    let back = integrate(server, &updates).map_err(|e| e.to_string())?;
    check(&back == server, || "extract -> integrate changed the server".into())
}

/// Runs every invariant for one case.
pub fn plan_case(kind: StrategyKind, seed: u64, round: usize, server_u: usize) -> Result<(), String> {
    let server = Architecture::new(server_u, 3, 10).map_err(|e| e.to_string())?;
    let slots = slots(seed, server_u);
    let planner = Planner::new(StrategySpec::new(kind, seed), server.clone(), &slots).map_err(|e| e.to_string())?;
    let plan = |c: usize, t: usize| planner.make_plan(c, t).map_err(|e| e.to_string());
    let small: Vec<usize> = slots.iter().filter(|c| c.complexity < server_u).map(|c| c.id).collect();
    let groups = expected_groups(&slots, server_u);
    let n = &server.widths;

    let now: Vec<ChannelPlan> = (0..CLIENTS).map(|c| plan(c, round)).collect::<Result<_, _>>()?;
    let next: Vec<ChannelPlan> = (0..CLIENTS).map(|c| plan(c, round + 1)).collect::<Result<_, _>>()?;
    for (c, p) in now.iter().enumerate() {
        well_formed(p, &server, slots[c].complexity).map_err(|e| format!("client {c}: {e}"))?;
        if slots[c].complexity == server_u {
            check(p.is_full(), || format!("large client {c} not full"))?;
        }
    }
    let first = small[0];
    let same_all = |ps: &[ChannelPlan]| small.iter().all(|&c| ps[c] == ps[first]);

    match kind {
        StrategyKind::Ofm => {
            for &c in &small {
                for b in 0..NUM_BLOCKS {
                    let want: Vec<usize> = (0..n[b] / 2).collect();
                    check(now[c].outputs(b) == want.as_slice(), || format!("OFM client {c} block {b} not a prefix"))?;
                }
            }
        }
        StrategyKind::Ofr => {
            check(same_all(&now), || "OFR clients differ".into())?;
            check(now[first] == next[first], || "OFR changed between rounds".into())?;
        }
        StrategyKind::Osm => {
            let g = round % 4;
            for b in 0..NUM_BLOCKS {
                let want = half(n[b], quadrant_top(g, b));
                check(now[first].outputs(b) == want.as_slice(), || format!("OSM round {round} block {b}"))?;
            }
            check(same_all(&now), || "OSM clients differ within a round".into())?;
        }
        StrategyKind::Osr => {
            check(same_all(&now), || "OSR clients differ within a round".into())?;
            check(now[first] != next[first], || "OSR did not resample".into())?;
        }
        StrategyKind::Gfm => {
            for &c in &small {
                let g = groups[&c];
                for b in 0..NUM_BLOCKS {
                    let want = half(n[b], quadrant_top(g, b));
                    check(now[c].outputs(b) == want.as_slice(), || format!("GFM client {c} block {b}"))?;
                }
            }
            for b in 0..NUM_BLOCKS {
                let union: BTreeSet<usize> = small.iter().flat_map(|&c| now[c].outputs(b).to_vec()).collect();
                check(union.len() == n[b], || format!("GFM quadrants leave block {b} uncovered"))?;
            }
        }
        StrategyKind::Gfr | StrategyKind::Gsr => {
            for &a in &small {
                for &c in &small {
                    if groups[&a] == groups[&c] {
                        check(now[a] == now[c], || format!("{kind}: group mates {a} and {c} differ"))?;
                    }
                }
            }
            if kind == StrategyKind::Gfr {
                check(small.iter().all(|&c| now[c] == next[c]), || "GFR changed between rounds".into())?;
            } else {
                check(small.iter().any(|&c| now[c] != next[c]), || "GSR did not resample".into())?;
            }
        }
        StrategyKind::Ufr => {
            let later: Vec<ChannelPlan> = (0..CLIENTS).map(|c| plan(c, round + CLIENTS)).collect::<Result<_, _>>()?;
            check(small.iter().all(|&c| now[c] == later[c]), || "UFR period is not the client count".into())?;
            for k in 1..CLIENTS {
                let shifted = plan(first, round + k)?;
                check(shifted != now[first], || format!("UFR repeats after {k} < {CLIENTS} rounds"))?;
            }
            let distinct: BTreeSet<Vec<Vec<usize>>> = small.iter().map(|&c| outputs(&now[c])).collect();
            check(distinct.len() == small.len(), || "UFR clients share a set".into())?;
        }
        StrategyKind::Usr => {
            let distinct: BTreeSet<Vec<Vec<usize>>> = small.iter().map(|&c| outputs(&now[c])).collect();
            check(distinct.len() == small.len(), || "USR clients share a set".into())?;
            check(small.iter().all(|&c| now[c] != next[c]), || "USR did not resample".into())?;
        }
        StrategyKind::Full => return Err("FULL has no small clients".into()),
    }

    let params = ModelParams::<f32>::init(&server, seed);
    round_trip(&params, &now)
}
