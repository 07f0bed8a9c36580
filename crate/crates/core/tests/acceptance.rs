//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Desk-scale experiments use the configs under `configs/`.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use hetfl::attacks::AttackKind;
use hetfl::channel_plan::StrategyKind;
use hetfl::experiment::{pearson_log_corr, run_experiment, summarize, ExperimentConfig, ResultRow, Summary};
use hetfl::seed::SeedPath;
use rand::Rng as _;

const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;
const GRAD_FLOOR: f64 = 1e-6;
const FEDAVG_ULPS: u64 = 1;
const PLAN_CASES: usize = 200;
const COUPLING_GAP: f64 = 5.0;
const UNTRAINED_AUC: (f64, f64) = (0.45, 0.55);
const OVERFIT_YEOM_AUC: f64 = 0.9;
const OVERFIT_AVG_AUC: f64 = 0.8;
const METRIC_CASES: u64 = 50;
const PARTITION_SEEDS: u64 = 100;
const PEARSON_MIN_SIZE: usize = 400;
const PEARSON_NEGATIVE: usize = 4;

const STRATEGIES: &str = include_str!("../../../configs/desk_strategies.json");
const LAYER_WISE: &str = include_str!("../../../configs/desk_coupling_layer_wise.json");
const INDEPENDENT: &str = include_str!("../../../configs/desk_coupling_independent.json");
const SIZE_PRIVACY: &str = include_str!("../../../configs/desk_size_privacy.json");

type Outcome = Result<String, String>;

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn config(json: &str) -> ExperimentConfig {
    serde_json::from_str(json).expect("bundled config parses")
}

fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<ResultRow>, String> {
    let out = run_experiment(cfg, dir, jobs()).map_err(|e| e.to_string())?;
    if !out.failures.is_empty() {
        return Err(format!("{} cells failed: {:?}", out.failures.len(), out.failures));
    }
    Ok(out.rows)
}

fn gradients() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 1..=8 {
        let (err, n) = common::gradient_check(8, GRAD_STEP, GRAD_FLOOR, seed);
        if n != 540 {
            return Err(format!("checked {n} values, expected 540"));
        }
        worst = worst.max(err);
    }
    let msg = format!("worst relative error {worst:.2e} over 8 seeds (tol {GRAD_TOL:e})");
    if worst < GRAD_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fedavg() -> Outcome {
    let worst = (0..3).map(|s| common::fedavg_reduction_ulps(4, s)).max().unwrap_or(0);
    let msg = format!("max {worst} ulp from weighted mean (tol {FEDAVG_ULPS})");
    if worst <= FEDAVG_ULPS {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn plans() -> Outcome {
    let mut rng = SeedPath::root(0).with("plan-cases").rng();
    for kind in StrategyKind::HETEROGENEOUS {
        for _ in 0..PLAN_CASES {
            let (seed, round, u) = (rng.gen::<u64>(), rng.gen_range(0..500), 2 * rng.gen_range(1..=4));
            common::plans::plan_case(kind, seed, round, u)
                .map_err(|e| format!("{kind} seed {seed} round {round} u {u}: {e}"))?;
        }
    }
    Ok(format!("{PLAN_CASES} cases x {} strategies", StrategyKind::HETEROGENEOUS.len()))
}

fn coupling() -> Outcome {
    let mean_acc = |json: &str| -> Result<f64, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let rows = run(&config(json), dir.path())?;
        Ok(rows.iter().map(|r| r.mean_client_acc).sum::<f64>() / rows.len() as f64)
    };
    let (lw, ind) = (mean_acc(LAYER_WISE)?, mean_acc(INDEPENDENT)?);
    let msg = format!(
        "USR client acc layer-wise {lw:.2} vs independent {ind:.2}, gap {:.2} (need >= {COUPLING_GAP})",
        lw - ind
    );
    if lw - ind >= COUPLING_GAP {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn attack_sanity() -> Outcome {
    let mean_over = |members, epochs| {
        let mut sums = [0.0; 3];
        for seed in 0..5 {
            for (i, (_, a)) in common::attack_sanity(members, epochs, seed).into_iter().enumerate() {
                sums[i] += a / 5.0;
            }
        }
        sums
    };
    let untrained = mean_over(200, 0);
    let overfit = mean_over(64, 200);
    let avg = overfit.iter().sum::<f64>() / 3.0;
    let msg = format!(
        "untrained yeom/lira/tmia {:.3}/{:.3}/{:.3} (need [{}, {}]); overfit yeom {:.3} (> {OVERFIT_YEOM_AUC}), average {avg:.3} (> {OVERFIT_AVG_AUC})",
        untrained[0], untrained[1], untrained[2], UNTRAINED_AUC.0, UNTRAINED_AUC.1, overfit[0]
    );
    let in_band = untrained.iter().all(|&a| (UNTRAINED_AUC.0..=UNTRAINED_AUC.1).contains(&a));
    if in_band && overfit[0] > OVERFIT_YEOM_AUC && avg > OVERFIT_AVG_AUC {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn metrics() -> Outcome {
    for seed in 0..METRIC_CASES {
        common::oracles::metric_case(seed)?;
    }
    Ok(format!("{METRIC_CASES} random vectors match enumeration exactly"))
}

/// Strategy groups from most to least resilient.
const S_KINDS: [StrategyKind; 3] = [StrategyKind::Osr, StrategyKind::Gsr, StrategyKind::Usr];
const G_KINDS: [StrategyKind; 3] = [StrategyKind::Gfm, StrategyKind::Gfr, StrategyKind::Ufr];
const O_KINDS: [StrategyKind; 2] = [StrategyKind::Ofm, StrategyKind::Ofr];
const F_KINDS: [StrategyKind; 5] = [
    StrategyKind::Ofm,
    StrategyKind::Ofr,
    StrategyKind::Gfm,
    StrategyKind::Gfr,
    StrategyKind::Ufr,
];

fn group_mean(s: &Summary, mix: usize, kinds: &[StrategyKind], f: fn(&hetfl::experiment::SummaryRow) -> f64) -> f64 {
    kinds.iter().map(|&k| f(s.row(k, mix).expect("row present"))).sum::<f64>() / kinds.len() as f64
}

fn acc(r: &hetfl::experiment::SummaryRow) -> f64 {
    r.mean_client_acc.mean
}

fn auc(r: &hetfl::experiment::SummaryRow) -> f64 {
    r.avg_auc.mean
}

fn h1(s: &Summary) -> Outcome {
    let g = |kinds: &[StrategyKind], f| group_mean(s, 2, kinds, f);
    let aucs = [g(&S_KINDS, auc), g(&G_KINDS, auc), g(&O_KINDS, auc)];
    let accs = [g(&S_KINDS, acc), g(&G_KINDS, acc), g(&O_KINDS, acc)];
    // both rise from S to O: more resilient groups pay in accuracy
    let inversions = aucs.windows(2).chain(accs.windows(2)).filter(|w| w[0] > w[1]).count();
    let msg = format!(
        "S/G/O avg AUC {:.4}/{:.4}/{:.4}, client acc {:.2}/{:.2}/{:.2}, {inversions} adjacent inversions (max 1)",
        aucs[0], aucs[1], aucs[2], accs[0], accs[1], accs[2]
    );
    if inversions <= 1 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn h2(s: &Summary) -> Outcome {
    let pair = |a, b, f: fn(&hetfl::experiment::SummaryRow) -> f64| {
        (f(s.row(a, 2).expect("row")) - f(s.row(b, 2).expect("row"))).abs()
    };
    let fs = |f| group_mean(s, 2, &F_KINDS, f) - group_mean(s, 2, &S_KINDS, f);
    let (gap_acc, gap_auc) = (fs(acc), fs(auc));
    let o = (pair(StrategyKind::Ofm, StrategyKind::Ofr, acc), pair(StrategyKind::Ofm, StrategyKind::Ofr, auc));
    let g = (pair(StrategyKind::Gfm, StrategyKind::Gfr, acc), pair(StrategyKind::Gfm, StrategyKind::Gfr, auc));
    let msg = format!(
        "F-S gap acc {gap_acc:.2} AUC {gap_auc:.4}; |OFM-OFR| {:.2}/{:.4}; |GFM-GFR| {:.2}/{:.4}",
        o.0, o.1, g.0, g.1
    );
    if o.0 < gap_acc && g.0 < gap_acc && o.1 < gap_auc && g.1 < gap_auc {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn h3(s: &Summary) -> Outcome {
    let (two, eight) = (s.delta(2).ok_or("no mix 2")?, s.delta(8).ok_or("no mix 8")?);
    let msg = format!(
        "best-worst server acc {:.2} -> {:.2}, client acc {:.2} -> {:.2}, avg AUC {:.4} -> {:.4}",
        two.server_acc, eight.server_acc, two.mean_client_acc, eight.mean_client_acc, two.avg_auc, eight.avg_auc
    );
    if eight.server_acc < two.server_acc && eight.mean_client_acc < two.mean_client_acc && eight.avg_auc < two.avg_auc {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn partitions() -> Outcome {
    for seed in 0..PARTITION_SEEDS {
        common::oracles::partition_case(seed)?;
    }
    for seed in 0..20 {
        common::oracles::near_uniform(seed)?;
    }
    Ok(format!("{PARTITION_SEEDS} seeds disjoint, exhaustive and proportional; alpha 1e6 near uniform"))
}

fn size_privacy() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rows = run(&config(SIZE_PRIVACY), dir.path())?;
    let mut corrs = Vec::new();
    for row in &rows {
        let (sizes, advs): (Vec<usize>, Vec<f64>) = row
            .clients
            .iter()
            .filter_map(|c| {
                let yeom = c.attacks.as_ref()?.iter().find(|(k, _)| *k == AttackKind::Yeom)?;
                Some((c.dataset_size, yeom.1.advantage))
            })
            .unzip();
        corrs.push(pearson_log_corr(&sizes, &advs, PEARSON_MIN_SIZE).map_err(|e| e.to_string())?);
    }
    let negative = corrs.iter().filter(|&&r| r < 0.0).count();
    let shown: Vec<String> = corrs.iter().map(|r| format!("{r:.2}")).collect();
    let msg = format!("r = [{}], {negative}/{} negative (need >= {PEARSON_NEGATIVE})", shown.join(", "), corrs.len());
    if negative >= PEARSON_NEGATIVE {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Every CSV under `dir`, keyed by relative path.
fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("read dir").flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                let rel = p.strip_prefix(dir).expect("prefix").display().to_string();
                out.push((rel, std::fs::read(&p).expect("read csv")));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let cfg = common::tiny_config();
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    run(&cfg, a.path())?;
    run(&cfg, b.path())?;
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    if fa.is_empty() {
        return Err("no CSV output".into());
    }
    if fa != fb {
        return Err("CSV output differs between reruns".into());
    }
    Ok(format!("{} CSV files byte-identical across reruns", fa.len()))
}

fn report(id: usize, name: &str, t: Instant, outcome: Outcome, failed: &mut usize) {
    let secs = t.elapsed().as_secs_f64();
    match outcome {
        Ok(msg) => println!("PASS {id:>2} {name}: {msg} [{secs:.1}s]"),
        Err(msg) => {
            *failed += 1;
            println!("FAIL {id:>2} {name}: {msg} [{secs:.1}s]");
        }
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let quick: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "gradient correctness", gradients),
        (2, "fedavg reduction", fedavg),
        (3, "channel-plan invariants", plans),
        (5, "attack sanity", attack_sanity),
        (6, "metric oracles", metrics),
        (10, "dirichlet partition", partitions),
        (12, "determinism", determinism),
        (4, "layer-wise coupling", coupling),
    ];
    for (id, name, f) in quick {
        let t = Instant::now();
        report(id, name, t, f(), &mut failed);
    }

    let t = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let summary = run(&config(STRATEGIES), dir.path()).and_then(|_| summarize(dir.path()).map_err(|e| e.to_string()));
    let checks: [(usize, &str, fn(&Summary) -> Outcome); 3] = [
        (7, "H1 resilience ordering", h1),
        (8, "H2 M/R similarity", h2),
        (9, "H3 shrinking deltas", h3),
    ];
    for (id, name, f) in checks {
        let outcome = summary.as_ref().map_err(Clone::clone).and_then(f);
        report(id, name, t, outcome, &mut failed);
    }

    let t = Instant::now();
    report(11, "size/privacy correlation", t, size_privacy(), &mut failed);

    println!("{} of 12 criteria passed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
