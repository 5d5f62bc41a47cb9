use irpki::repository::{self, parse_seed, Ablation, RoaCounts, Scenario};
use irpki::rp::FetchMode;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// Small trees with uneven ROA counts, varied keys, issuance and validity.
pub fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    (1usize..6, prop::sample::select(vec!["alpha", "beta", "gamma"]), 0i64..1000, 25u32..200)
        .prop_flat_map(|(cas, seed, hour, validity)| {
            (Just((cas, seed, hour, validity)), prop::collection::vec(0usize..5, cas))
        })
        .prop_map(|((cas, seed, hour, validity), roas)| {
            let mut s = Scenario::new(cas, 0, Ablation::Legacy).with_seed(parse_seed(seed).unwrap());
            s.roas_per_ca = RoaCounts::PerCa(roas);
            s.issued_at += hour * 3600;
            s.validity_hours = validity;
            s
        })
}

/// Legacy validation, conversion, improved validation: same VRPs, and the
/// legacy tree is still served unchanged next to the improved one.
pub fn check_equivalence(s: Scenario) -> Result<(), TestCaseError> {
    let dir = tempfile::tempdir().unwrap();
    let mut tree = super::generate(&s, dir.path());
    let (legacy, lm) = super::validate(&tree, FetchMode::LegacyOnly);
    prop_assert!(lm.failures.is_empty(), "{:?}", lm.failures);
    prop_assert_eq!(legacy.len(), s.total_roas());

    let report = repository::convert(&mut tree, super::now(&s)).unwrap();
    prop_assert!(report.failed.is_empty(), "{:?}", report.failed);
    let (improved, im) = super::validate(&tree, FetchMode::ImprovedOnly);
    prop_assert!(im.failures.is_empty(), "{:?}", im.failures);
    prop_assert_eq!(&improved, &legacy);

    let (again, _) = super::validate(&tree, FetchMode::LegacyOnly);
    prop_assert_eq!(&again, &legacy);
    Ok(())
}
