use super::*;
use crate::quad::GaussLegendre;
use proptest::prelude::*;

fn psi2() -> Bump {
    Bump::canonical(2.0, BumpKind::PsiSymmetric).unwrap()
}

fn hwin() -> Bump {
    Bump::canonical(2.0, BumpKind::HWindow).unwrap()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn bump_values_at_centre_and_edges() {
    let p = psi2();
    assert_eq!(p.eval(1.0), (-1.0f64).exp());
    assert_eq!(p.eval(2.0), 0.0);
    assert_eq!(p.eval(0.5), 0.0);
    assert_eq!(p.eval(5.0), 0.0);
    let h = hwin();
    assert_eq!(h.eval(1.5), (-1.0f64).exp());
    assert_eq!(h.eval(1.0), 0.0);
    assert_eq!(h.eval(2.0), 0.0);
    assert!(p.is_symmetric() && !h.is_symmetric());
    assert_eq!(
        Bump::canonical(1.0, BumpKind::PsiSymmetric),
        Err(TestFnError::Alpha(1.0))
    );
    assert_eq!(Bump::window(2.0, 1.0), Err(TestFnError::Window(2.0, 1.0)));
}

#[test]
fn derivatives_match_high_precision_values() {
    // reference values from 40-digit numerical differentiation
    let p = psi2();
    let d8 = p.derivative(8, 1.3).unwrap();
    assert!((d8 / 35_875.151_245_215_48 - 1.0).abs() < 1e-10, "{d8}");
    let d3 = p.derivative(3, 0.8).unwrap();
    assert!((d3 / 23.018_137_016_986_215 - 1.0).abs() < 1e-12, "{d3}");
    let h5 = hwin().derivative(5, 1.4).unwrap();
    assert!((h5 / 234.781_936_567_573_08 - 1.0).abs() < 1e-12, "{h5}");
    assert_eq!(p.derivative(9, 1.0), Err(TestFnError::Order(9)));
}

#[test]
fn derivatives_match_central_differences() {
    let step = 1e-5;
    for b in [psi2(), hwin(), Bump::canonical(3.0, BumpKind::PsiSymmetric).unwrap()] {
        let (lo, hi) = b.support;
        let grid: Vec<f64> = (1..40)
            .map(|i| lo + (hi - lo) * (0.1 + 0.8 * i as f64 / 40.0))
            .collect();
        for j in 1..=4 {
            let scale = grid
                .iter()
                .map(|&y| b.derivative(j, y).unwrap().abs())
                .fold(0.0, f64::max);
            for &y in &grid {
                let exact = b.derivative(j, y).unwrap();
                let fd =
                    (b.derivative(j - 1, y + step).unwrap() - b.derivative(j - 1, y - step).unwrap()) / (2.0 * step);
                let denom = exact.abs().max(1e-3 * scale);
                assert!(((fd - exact) / denom).abs() < 1e-4, "j {j} y {y}: {fd} vs {exact}");
            }
        }
        // and the value itself against a plain second difference
        for &y in &grid {
            let fd2 = (b.eval(y + 1e-4) - 2.0 * b.eval(y) + b.eval(y - 1e-4)) / 1e-8;
            let d2 = b.derivative(2, y).unwrap();
            assert!((fd2 - d2).abs() < 1e-4 * d2.abs().max(1.0));
        }
    }
}

#[test]
fn derivatives_vanish_near_support_edges() {
    let p = psi2();
    for j in 0..=8 {
        let v = p.derivative(j, 2.0 - 1e-9).unwrap();
        assert!(v.is_finite() && v.abs() < 1e-100);
    }
}

#[test]
fn mellin_at_zero_is_log_measure_integral() {
    let p = psi2();
    let direct = GaussLegendre::cached(20).integrate_panels(|y| p.eval(y) / y, 0.5, 2.0, 40);
    let m = mellin(&p, c(0.0, 0.0));
    assert!((m.re - direct).abs() < 1e-12 && m.im.abs() < 1e-15);
    assert!((m.re - 0.307_753_061_862_954_92).abs() < 1e-12);
}

#[test]
fn mellin_matches_reference_and_is_even() {
    let p = psi2();
    let s = c(1.0, 2.0);
    let m = mellin(&p, s);
    assert!((m - c(0.271_712_482_072_323_57, 0.043_043_448_350_005_384)).norm() < 1e-12);
    assert!((m - mellin(&p, -s)).norm() < 1e-10);
    let ts = tanh_sinh(|y| p.eval(1.0 / y) * y.powf(0.5), 0.5, 2.0, 8);
    assert!((mellin(&p, c(1.5, 0.0)).re - ts).abs() < 1e-12);
}

#[test]
fn mellin_decay_respects_integration_by_parts_bound() {
    // With phi(u) = psi(e^{-u}) = profile(-u / log alpha), four integrations by
    // parts give |psi~(1 + it)| <= |s|^{-4} int |phi^(4)(u)| e^u du, so
    // (1 + |t|)^4 |psi~| <= 16 max(int |phi| e^u, int |phi^(4)| e^u).
    let p = psi2();
    let la = 2f64.ln();
    let m0 = gl_panels(|u| profile_derivatives(-u / la, 0)[0] * u.exp(), -la, la, 64);
    let m4 = gl_panels(
        |u| (profile_derivatives(-u / la, 4)[4] / la.powi(4)).abs() * u.exp(),
        -la,
        la,
        64,
    );
    let bound = 16.0 * m0.max(m4);
    for i in 0..=400 {
        let t = i as f64 * 0.25;
        let w = mellin(&p, c(1.0, t)).norm() * (1.0 + t).powi(4);
        assert!(w <= bound, "t {t}: {w} > {bound}");
    }
}

#[test]
fn public_decay_constant_matches_the_profile_bound() {
    let p = psi2();
    let la = 2f64.ln();
    let m0 = gl_panels(|u| profile_derivatives(-u / la, 0)[0] * u.exp(), -la, la, 64);
    let m4 = gl_panels(
        |u| (profile_derivatives(-u / la, 4)[4] / la.powi(4)).abs() * u.exp(),
        -la,
        la,
        64,
    );
    let direct = 16.0 * m0.max(m4);
    let c4 = mellin_decay_constant(&p, 4, 1.0).unwrap();
    assert!((c4 - direct).abs() < 1e-9 * direct, "{c4} {direct}");
    let cw = mellin_decay_constant(&hwin(), 4, 1.0).unwrap();
    for i in 0..=400 {
        let t = i as f64 * 0.25;
        assert!(mellin(&hwin(), c(1.0, t)).norm() * (1.0 + t).powi(4) <= cw);
    }
    assert_eq!(mellin_decay_constant(&p, 9, 1.0), Err(TestFnError::Order(9)));
}

fn inversion_spec(sigma: f64) -> ContourSpec {
    ContourSpec::new(sigma, 400.0, ContourSpec::default_step(0.25)).unwrap()
}

#[test]
fn mellin_inversion_round_trip() {
    let p = psi2();
    let samples = ContourSamples::new(|s| mellin(&p, s), inversion_spec(1.0));
    for i in 0..50 {
        let y = 0.4 + 1.8 * i as f64 / 49.0;
        let v = samples.invert(y, 1e-6).unwrap();
        assert!((v - p.eval(y)).abs() < 1e-6, "y {y}: {v} vs {}", p.eval(y));
    }
    for y in [0.3, 0.45, 2.2, 3.0] {
        assert!(samples.invert(y, 1e-6).unwrap().abs() < 1e-6);
    }
}

#[test]
fn mellin_inversion_independent_of_line() {
    let p = psi2();
    let lines: Vec<ContourSamples> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&s| ContourSamples::new(|z| mellin(&p, z), inversion_spec(s)))
        .collect();
    for y in [0.6, 0.9, 1.0, 1.3, 1.8] {
        let v: Vec<f64> = lines.iter().map(|l| l.invert(y, 1e-6).unwrap()).collect();
        assert!((v[0] - v[1]).abs() < 1e-6 && (v[1] - v[2]).abs() < 1e-6, "{v:?}");
    }
}

#[test]
fn mellin_inversion_reports_large_tail() {
    let p = psi2();
    let short = ContourSpec::new(1.0, 5.0, 0.05).unwrap();
    assert!(matches!(
        mellin_invert(|s| mellin(&p, s), short, 1.0, 1e-10),
        Err(TestFnError::Tail { .. })
    ));
    assert!(ContourSpec::new(1.0, 0.4, 0.05).is_err());
    assert!(ContourSpec::new(1.0, 10.0, 0.0).is_err());
    assert_eq!(ContourSpec::default_step(0.25), 0.05);
    assert!((ContourSpec::default_step(1e-3) - 1.0 / (4.0 * 1e3f64.ln())).abs() < 1e-15);
}

#[test]
fn hbar_at_zero_is_plain_integral() {
    let h = hwin();
    let direct = GaussLegendre::cached(20).integrate_panels(|u| h.eval(u.sqrt()) / (2.0 * PI * u).sqrt(), 1.0, 4.0, 40);
    let v = hbar(&h, 0.0, c(0.0, 0.0), HbarKind::Full);
    assert!((v.re - direct).abs() < 1e-12 && v.im.abs() < 1e-15);
}

#[test]
fn hbar_reference_value_and_real_part() {
    let h = hwin();
    let v = hbar(&h, 1.7, c(0.0, 0.0), HbarKind::Full);
    assert!((v - c(-0.077_400_242_613_906_53, -0.065_210_528_372_950_41)).norm() < 1e-12);
    for x in [0.3, 1.7] {
        let full = hbar(&h, x, c(0.0, 0.0), HbarKind::Full);
        let re = hbar(&h, x, c(0.0, 0.0), HbarKind::RealPart);
        assert!((full.re - re.re).abs() < 1e-10 && re.im.abs() < 1e-15);
    }
}

#[test]
fn hbar_real_decay_respects_integration_by_parts_bound() {
    // hbar^Re_0(v) = int H(u) cos(uv) du with H(u) = h(sqrt u) / sqrt(2 pi u),
    // so |hbar^Re_0(v)| v^3 <= int |H'''(u)| du.
    let h = hwin();
    let big_h = |u: f64| h.eval(u.sqrt()) / (2.0 * PI * u).sqrt();
    let e = 1e-3;
    let third = |u: f64| {
        (big_h(u + 2.0 * e) - 2.0 * big_h(u + e) + 2.0 * big_h(u - e) - big_h(u - 2.0 * e)) / (2.0 * e * e * e)
    };
    let bound = gl_panels(|u| third(u).abs(), 1.0, 4.0, 200);
    for i in 0..=490 {
        let v = 1.0 + 0.1 * i as f64;
        let x = hbar(&h, v, c(0.0, 0.0), HbarKind::RealPart).norm() * v.powi(3);
        assert!(x <= bound, "v {v}: {x} > {bound}");
    }
}

#[test]
fn hbar_real_mellin_needs_the_power_of_u() {
    let h = hwin();
    for (w, s) in [
        (c(0.0, 0.0), c(0.5, 0.0)),
        (c(1.0, 0.0), c(0.3, 2.0)),
        (c(0.0, 1.0), c(0.7, -1.0)),
    ] {
        let direct = hbar_real_mellin_direct(&h, w, s, 400.0);
        let closed = hbar_real_mellin(&h, w, s).unwrap();
        let powerless = hbar_real_mellin_without_power(&h, w, s).unwrap();
        assert!(
            (direct - closed).norm() < 1e-6 * closed.norm().max(1.0),
            "{direct} vs {closed}"
        );
        assert!(
            (direct - powerless).norm() > 1e-2 * closed.norm(),
            "{direct} vs {powerless}"
        );
    }
}

#[test]
fn fourier_transform_at_zero_is_mass() {
    let h = hwin();
    let f0 = fourier(&h, 0.0);
    assert!((f0.re - integral(&h)).abs() < 1e-14 && f0.im.abs() < 1e-15);
    // real even profile about 3/2: h^(xi) e(3 xi / 2) is real
    let z = fourier(&h, 0.8) * Complex64::new(0.0, 2.0 * PI * 0.8 * 1.5).exp();
    assert!(z.im.abs() < 1e-14);
}

#[test]
fn bump_serialises() {
    let p = psi2();
    let json = serde_json::to_string(&p).unwrap();
    assert!(json.contains("psi_symmetric"));
    let back: Bump = serde_json::from_str(&json).unwrap();
    assert_eq!(back, p);
}

proptest! {
    #[test]
    fn psi_is_symmetric_under_inversion(y in 0.3f64..3.0, alpha in 1.1f64..4.0) {
        let p = Bump::canonical(alpha, BumpKind::PsiSymmetric).unwrap();
        prop_assert!((p.eval(y) - p.eval(1.0 / y)).abs() < 1e-15);
    }

    #[test]
    fn mellin_is_linear(re in -2.0f64..2.0, im in -30.0f64..30.0, a in -3.0f64..3.0) {
        let p = psi2();
        let q = Bump::canonical(3.0, BumpKind::PsiSymmetric).unwrap();
        let s = c(re, im);
        let sum = mellin_fn(|y| a * p.eval(y) + q.eval(y), q.support, s);
        let parts = mellin(&p, s) * a + mellin(&q, s);
        prop_assert!((sum - parts).norm() < 1e-12);
    }

    #[test]
    fn mellin_symmetry_holds_off_the_axis(re in -2.0f64..2.0, im in -20.0f64..20.0) {
        let p = Bump::canonical(2.5, BumpKind::PsiSymmetric).unwrap();
        let s = c(re, im);
        prop_assert!((mellin(&p, s) - mellin(&p, -s)).norm() < 1e-10 * mellin(&p, s).norm().max(1.0));
    }
}
