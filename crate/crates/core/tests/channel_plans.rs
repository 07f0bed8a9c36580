mod common;

use common::plans::plan_case;
use hetfl::channel_plan::StrategyKind;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_strategy_keeps_plan_invariants(seed in any::<u64>(), round in 0usize..500, half_u in 1usize..=4) {
        for kind in StrategyKind::HETEROGENEOUS {
            if let Err(e) = plan_case(kind, seed, round, 2 * half_u) {
                prop_assert!(false, "{kind} seed {seed} round {round} u {}: {e}", 2 * half_u);
            }
        }
    }
}

#[test]
fn full_rejects_small_clients() {
    assert!(plan_case(StrategyKind::Full, 1, 0, 4).is_err());
}
