use super::*;
use crate::testfn::BumpKind;

#[test]
fn checks_respect_their_bounds() {
    assert!(Check::at_most("a", 1.0, 1.0).pass);
    assert!(!Check::at_most("a", 1.5, 1.0).pass);
    assert!(!Check::at_most("a", f64::NAN, 1.0).pass);
    assert!(Check::at_least("b", 0.0, 0.0).pass);
    assert!(!Check::at_least("b", -1e-300, 0.0).pass);
    assert!(Check::info("c", f64::INFINITY).pass);
    let report = SuiteReport::new("s", vec![Check::at_most("a", 2.0, 1.0), Check::info("c", 3.0)]);
    assert!(!report.passed);
    assert_eq!(report.failures().count(), 1);
}

#[test]
fn product_expansion_gives_known_tau() {
    let tau = delta_by_product(10);
    assert_eq!(
        &tau[1..],
        &[1, -24, 252, -1472, 4830, -6048, -16744, 84480, -113643, -115920]
    );
}

#[test]
fn kloosterman_suite_passes_on_small_moduli() {
    let r = kloosterman(1..=6, 1.0).unwrap();
    assert!(r.passed, "{r:?}");
    assert_eq!(r.checks.len(), 6);
}

#[test]
fn mellin_suite_passes_for_the_canonical_bump() {
    let r = mellin_suite(&Bump::canonical(2.0, BumpKind::PsiSymmetric).unwrap(), 1.0).unwrap();
    assert!(r.passed, "{r:?}");
    assert_eq!(r.checks.len(), 3);
}

#[test]
fn stationary_suite_passes() {
    let r = stationary(7, 20, 1.0).unwrap();
    assert!(r.passed, "{r:?}");
    assert_eq!(r.checks.len(), 24);
}

#[test]
fn eigen_suites_name_missing_weights() {
    let empty = EigenStore::default();
    assert!(matches!(petersson(&empty, &[12, 14], 3, 1.0), Err(SuiteError::MissingWeights(w)) if w == vec![12, 14]));
    assert!(matches!(
        eigenform(&empty, &[16], 10, 1.0),
        Err(SuiteError::MissingWeights(_))
    ));
}

#[test]
fn eigenform_and_petersson_suites_pass_on_small_weights() {
    let store = EigenStore::build(&[12, 16, 24], 200, None).unwrap();
    let r = eigenform(&store, &[12, 16, 24], 200, 1.0).unwrap();
    assert!(r.passed, "{r:?}");
    let p = petersson(&store, &[12, 16, 24], 5, 1.0).unwrap();
    assert!(p.passed, "{p:?}");
}

#[test]
fn scale_loosens_tolerances() {
    let strict = kloosterman(1..=3, 1e-30).unwrap();
    assert!(strict
        .checks
        .iter()
        .all(|c| matches!(c.bound, Bound::AtMost(l) if l == 1e-6 * 1e-30)));
}
