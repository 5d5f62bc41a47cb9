mod common;

use common::equivalence::{check_equivalence, scenario_strategy};
use irpki::repository::{self, Ablation};
use irpki::rp::FetchMode;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, max_shrink_iters: 20, ..ProptestConfig::default() })]

    #[test]
    fn converted_tree_yields_same_vrps(s in scenario_strategy()) {
        check_equivalence(s)?;
    }
}

#[test]
fn every_ablation_yields_legacy_vrps() {
    let dir = tempfile::tempdir().unwrap();
    let mut baseline = None;
    for ablation in Ablation::ALL {
        let s = common::scenario(4, 3, ablation, "ablations");
        let tree = common::generate(&s, &dir.path().join(ablation.to_string()));
        let (vrps, m) = common::validate(&tree, FetchMode::Auto);
        assert!(m.failures.is_empty(), "{ablation}: {:?}", m.failures);
        assert_eq!(vrps.len(), 12, "{ablation}");
        match &baseline {
            None => baseline = Some(vrps),
            Some(b) => assert_eq!(&vrps, b, "{ablation}"),
        }
    }
}

#[test]
fn converting_an_improved_tree_is_a_passthrough() {
    let dir = tempfile::tempdir().unwrap();
    let s = common::scenario(2, 2, Ablation::Full, "ablations");
    let mut tree = common::generate(&s, dir.path());
    let report = repository::convert(&mut tree, common::now(&s)).unwrap();
    assert!(report.passthrough);
    assert_eq!(tree.trees.len(), 1);
}
