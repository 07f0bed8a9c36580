//! Checks shared by the integration tests and the acceptance runner. Each one
//! recomputes its expected values independently of the code under test.

#![allow(dead_code)]

use hetfl::data::{synthetic_dataset, Dataset, SyntheticSpec};
use hetfl::nn::{cross_entropy, forward, loss_and_backward, Architecture, BatchView, Mode, ModelParams, ScaleRate};
use hetfl::seed::SeedPath;
use rand::Rng as _;
use rand_distr::StandardNormal;

pub mod oracles;
pub mod plans;

/// Tiny synthetic train/test pair.
pub fn tiny_data(per_class: usize, test_per_class: usize, seed: u64) -> (Dataset, Dataset) {
    synthetic_dataset(&SyntheticSpec {
        per_class,
        test_per_class,
        seed,
        ..SyntheticSpec::default()
    })
    .expect("synthetic data")
}

/// Worst relative error between analytic gradients and central differences
/// (step `h`) over every trainable value of a `u = 1` model on `n` Gaussian
/// 8x8 images. The error of one value is `|a − d| / max(|a|, |d|, floor)`.
pub fn gradient_check(n: usize, h: f64, floor: f64, seed: u64) -> (f64, usize) {
    let (c, side, classes) = (3, 8, 10);
    let mut rng = SeedPath::root(seed).rng();
    let x: Vec<f64> = (0..n * c * side * side).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let arch = Architecture::new(1, c, classes).expect("arch");
    let params: ModelParams<f64> = ModelParams::<f32>::init(&arch, seed).cast();
    let view = BatchView::new(&x, n, c, side, side);
    let loss_at = |p: &ModelParams<f64>| {
        let mut p = p.clone();
        let (logits, _) = forward(&mut p, &view, ScaleRate::FULL, Mode::Train).expect("forward");
        cross_entropy(&logits, &y, classes).expect("loss").0
    };

    let mut p = params.clone();
    let (_, cache) = forward(&mut p, &view, ScaleRate::FULL, Mode::Train).expect("forward");
    let (_, grads) = loss_and_backward(&params, &cache, &y).expect("backward");

    let analytic: Vec<Vec<f64>> = grads.trainable().into_iter().cloned().collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (t, g) in analytic.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let mut plus = params.clone();
            plus.trainable_mut()[t][i] += h;
            let mut minus = params.clone();
            minus.trainable_mut()[t][i] -= h;
            let d = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let err = (a - d).abs() / a.abs().max(d.abs()).max(floor);
            worst = worst.max(err);
            checked += 1;
        }
    }
    (worst, checked)
}

/// Distance in units of least precision between two finite `f32`s.
pub fn ulps(a: f32, b: f32) -> u64 {
    let key = |x: f32| {
        let bits = i64::from(x.to_bits() as i32);
        if bits < 0 {
            i64::from(i32::MIN) - bits
        } else {
            bits
        }
    };
    (key(a) - key(b)).unsigned_abs()
}

/// Runs one round of an all-FULL federation and returns the largest ulp
/// distance between the new server and the dataset-size weighted mean of
/// the client models, over every tensor (running statistics included).
pub fn fedavg_reduction_ulps(num_clients: usize, seed: u64) -> u64 {
    use hetfl::channel_plan::{StrategyKind, StrategySpec};
    use hetfl::data::dirichlet_partition;
    use hetfl::federation::{run_round, FederationConfig, FederationData, FederationState};

    let (train, test) = tiny_data(8, 2, seed);
    let part = dirichlet_partition(&train, num_clients, 5.0, seed).expect("partition");
    assert!(part.sizes().iter().all(|&s| s > 0));
    let cfg = FederationConfig {
        num_clients,
        num_large_clients: num_clients,
        rounds: 1,
        strategy: StrategySpec::new(StrategyKind::Full, seed),
        seed,
        ..FederationConfig::default()
    };
    let data = FederationData {
        train: &train,
        test: &test,
        partition: &part,
    };
    let mut state = FederationState::new(cfg, &data).expect("state");
    let updates = run_round(&mut state, &data).expect("round");
    let weights: Vec<f64> = part.sizes().iter().map(|&s| s as f64).collect();
    let total: f64 = weights.iter().sum();

    let mut worst = 0;
    let server = state.server.tensors();
    for (t, (_, values)) in server.iter().enumerate() {
        for (i, &got) in values.iter().enumerate() {
            let mean: f64 = updates
                .iter()
                .zip(&weights)
                .map(|((_, p), w)| w * f64::from(p.tensors()[t].1[i]))
                .sum::<f64>()
                / total;
            worst = worst.max(ulps(got, mean as f32));
        }
    }
    worst
}

/// A complete experiment small enough to run in a few seconds.
pub const TINY_CONFIG: &str = include_str!("../../../../configs/tiny.json");

pub fn tiny_config() -> hetfl::experiment::ExperimentConfig {
    serde_json::from_str(TINY_CONFIG).expect("tiny config parses")
}

/// AUC of every attack against one `u = 1` target holding `members` random
/// training samples. With `epochs = 0` the target is left at its
/// initialization; otherwise it is trained that many epochs on its members.
/// Shadows get the same budget as the target. Noisy images, small batches and
/// a high learning rate let the tiny model memorize its members.
pub fn attack_sanity(members: usize, epochs: usize, seed: u64) -> Vec<(hetfl::attacks::AttackKind, f64)> {
    use hetfl::attacks::{attack_suite, AttackConfig, AttackData, AttackTarget, ShadowBank, ShadowBudget};
    use hetfl::nn::AdamState;
    use hetfl::train::{train_epochs, TrainSettings};
    use rand::seq::index;

    let (train, test) = synthetic_dataset(&SyntheticSpec {
        per_class: 60,
        test_per_class: 40,
        noise: 1.0,
        seed,
        ..SyntheticSpec::default()
    })
    .expect("synthetic data");
    let root = SeedPath::root(seed).with("sanity");
    let mut idx = index::sample(&mut root.with("members").rng(), train.len(), members).into_vec();
    idx.sort_unstable();
    let arch = Architecture::new(1, train.channels, train.classes).expect("arch");
    let settings = TrainSettings {
        batch_size: 8,
        adam: hetfl::nn::Adam {
            lr: 1e-2,
            ..hetfl::nn::Adam::default()
        },
        ..TrainSettings::default()
    };
    let mut params = ModelParams::<f32>::init(&arch, root.with("init").value());
    if epochs > 0 {
        let mut adam = AdamState::for_params(&params);
        train_epochs(&mut params, &mut adam, &train, &idx, ScaleRate::FULL, epochs, &settings, root.with("train"))
            .expect("train target");
    }
    let cfg = AttackConfig {
        num_shadow: 4,
        distill_epochs: 10,
        distill_size: 100,
        eval_cap: members,
        ..AttackConfig::default()
    };
    let data = AttackData { train: &train, test: &test };
    let budget = ShadowBudget {
        epochs: epochs.max(1),
        subset_size: members,
        server_u: 1,
        settings,
    };
    let bank = ShadowBank::build(&data, &[1], &budget, &cfg, root.with("shadows")).expect("shadows");
    let target = AttackTarget {
        client: 0,
        params: &params,
        rate: ScaleRate::FULL,
        members: &idx,
    };
    let report = attack_suite(&target, &data, &bank, &cfg, root.with("attack")).expect("attacks");
    report.results.iter().map(|r| (r.attack, r.metrics.auc)).collect()
}
