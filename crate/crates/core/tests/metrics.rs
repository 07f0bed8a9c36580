mod common;

use common::oracles::metric_case;
use hetfl::attacks::auc;

#[test]
fn metrics_match_enumeration() {
    for seed in 0..50 {
        metric_case(seed).unwrap();
    }
}

#[test]
fn all_tied_scores_give_half() {
    let l = [true, false, false, true, true];
    assert_eq!(auc(&[0.3; 5], &l).unwrap(), 0.5);
}
