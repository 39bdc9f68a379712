use super::*;
use crate::forms::eigenforms;
use crate::testfn::BumpKind;

fn h() -> Bump {
    Bump::canonical(2.0, BumpKind::HWindow).unwrap()
}

#[test]
fn exact_formula_closes_on_small_weights() {
    for k in [12u32, 16, 22, 30] {
        let forms = eigenforms(k, 200).unwrap();
        for m in 1..=10 {
            for n in m..=10 {
                let s = exact_petersson_check(m, n, &forms, k).unwrap();
                assert!((s.lhs - s.rhs).abs() < 1e-8, "k {k} ({m},{n}): {} vs {}", s.lhs, s.rhs);
            }
        }
    }
}

#[test]
fn exact_formula_diagonal_tends_to_one_for_large_weight() {
    let forms = eigenforms(200, 400).unwrap();
    let s = exact_petersson_check(1, 1, &forms, 200).unwrap();
    assert!((s.rhs - 1.0).abs() < 1e-12);
    assert!((s.lhs - 1.0).abs() < 1e-8);
}

#[test]
fn exact_formula_rejects_short_data() {
    let forms = eigenforms(12, 40).unwrap();
    assert_eq!(
        exact_petersson_check(1, 41, &forms, 12),
        Err(TraceError::ShortEigenData { have: 40, need: 41 })
    );
}

#[test]
fn window_weights_validate_and_list_weights() {
    assert!(WindowWeights::new(30.0, 40.0, h(), false).is_err());
    let w = WindowWeights::plain(30.0, h()).unwrap();
    assert_eq!(w.weights(), (32..=60).step_by(2).collect::<Vec<u32>>());
    let s = WindowWeights::new(60.0, 20.0, h(), true).unwrap();
    // k - 1 in 20 * (4, 5)
    assert_eq!(s.weights(), (82..=100).step_by(2).collect::<Vec<u32>>());
    assert_eq!(s.effective_window().support, (4.0, 5.0));
}

#[test]
fn averaged_lhs_matches_direct_assembly_and_bessel_side() {
    let w = WindowWeights::plain(30.0, h()).unwrap();
    let store = EigenStore::build(&w.weights(), 200, None).unwrap();
    let lhs = averaged_petersson_lhs(1, 1, &w, &store).unwrap();
    let mut direct = 0.0;
    for k in (32..=60u32).step_by(2) {
        let weight = 2.0 * h().eval((k as f64 - 1.0) / 30.0);
        let inner: f64 = store.get(k).unwrap().iter().map(|f| 1.0 / f.l_sym2).sum();
        direct += weight * 2.0 * PI * PI / (k as f64 - 1.0) * inner;
    }
    assert!((lhs - direct).abs() < 1e-12);
    for (m, n) in [(1, 1), (2, 3), (4, 9), (6, 6)] {
        let l = averaged_petersson_lhs(m, n, &w, &store).unwrap();
        let b = averaged_petersson_bessel(m, n, &w).unwrap();
        assert!((l - b).abs() < 1e-9, "({m},{n}): {l} vs {b}");
        let swapped = averaged_petersson_lhs(n, m, &w, &store).unwrap();
        assert!((l - swapped).abs() < 1e-10);
    }
    let doubled = averaged_petersson_lhs(2, 3, &w.scaled(2.0), &store).unwrap();
    assert!((doubled - 2.0 * averaged_petersson_lhs(2, 3, &w, &store).unwrap()).abs() < 1e-14);
}

#[test]
fn averaged_lhs_reports_missing_weights_and_empty_windows() {
    let w = WindowWeights::plain(30.0, h()).unwrap();
    let store = EigenStore::build(&[32, 34], 200, None).unwrap();
    match averaged_petersson_lhs(1, 1, &w, &store) {
        Err(TraceError::MissingWeights(ws)) => assert_eq!(ws.len(), 13),
        other => panic!("{other:?}"),
    }
    let empty = WindowWeights::plain(30.0, Bump::window(0.05, 0.1).unwrap()).unwrap();
    assert!(empty.weights().is_empty());
    assert_eq!(
        averaged_petersson_lhs(1, 1, &empty, &EigenStore::default()).unwrap(),
        0.0
    );
}

#[test]
fn averaged_rhs_main_term_and_symmetry() {
    let w = WindowWeights::plain(30.0, h()).unwrap();
    let r = averaged_petersson_rhs(3, 3, &w).unwrap();
    assert!((r.main - integral(&h()) * 30.0).abs() < 1e-12);
    let a = averaged_petersson_rhs(2, 7, &w).unwrap();
    let b = averaged_petersson_rhs(7, 2, &w).unwrap();
    assert_eq!(a.main, 0.0);
    assert!((a.kloosterman_term - b.kloosterman_term).abs() < 1e-10);
    let d = averaged_petersson_rhs(2, 7, &w.scaled(2.0)).unwrap();
    assert!((d.kloosterman_term - 2.0 * a.kloosterman_term).abs() < 1e-12);
}

#[test]
fn kloosterman_term_vanishes_when_hbar_arguments_are_large() {
    // c K^2 / sqrt(mn) >= 240^2 / sqrt(2) for all c
    let w = WindowWeights::plain(240.0, h()).unwrap();
    let r = averaged_petersson_rhs(1, 2, &w).unwrap();
    assert!(r.kloosterman_term.abs() < 1e-8);
}

#[test]
fn asymptotic_matches_bessel_side_at_large_scale() {
    let w = WindowWeights::plain(240.0, h()).unwrap();
    for (m, n) in [(1, 1), (2, 3), (4, 9)] {
        let b = averaged_petersson_bessel(m, n, &w).unwrap();
        let r = averaged_petersson_rhs(m, n, &w).unwrap();
        let resid = b - r.main - r.kloosterman_term;
        assert!(resid.abs() < 1e-8, "({m},{n}): {resid}");
    }
}

#[test]
fn fourth_moment_scales_with_window_width() {
    let m = fourier_fourth_moment(&h());
    assert!(m > 0.0 && m.is_finite());
    // a window twice as long has h^(v) = 2 h1^(2v) up to phase, so the moment scales by 2^{-4}
    let wide = fourier_fourth_moment(&Bump::window(1.0, 3.0).unwrap());
    // |h^| has kinks at its zeros, which limits the quadrature to about 1e-4
    assert!((wide / m * 16.0 - 1.0).abs() < 1e-3, "{wide} {m}");
}
