//! Restricted mass of an eigenform along the vertical geodesic, its expected
//! value, and the diagonal / off-diagonal split of the mass.

use crate::forms::Eigenform;
use crate::quad::{gl_panels, tanh_sinh, Compensated, GaussLegendre};
use crate::testfn::Bump;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

/// Relative size of the dropped Fourier tail at the bottom of the support.
pub const FOURIER_TAIL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MassError {
    #[error("Fourier tail below {FOURIER_TAIL:e} needs {need} coefficients; eigen-data has {have}")]
    Tail { need: usize, have: usize },
    #[error("shifted-convolution sum needs lambda(n) up to {need}; eigen-data has {have}")]
    InsufficientEigenData { need: usize, have: usize },
}

/// ln((4 pi n)^{(k-1)/2} e^{-2 pi n y}).
fn ln_term(k: u32, n: usize, y: f64) -> f64 {
    (k as f64 - 1.0) / 2.0 * (4.0 * PI * n as f64).ln() - 2.0 * PI * n as f64 * y
}

/// Coefficients needed so that sum_{n>N} (4 pi n)^{(k-1)/2} e^{-2 pi n y}
/// stays below FOURIER_TAIL of the partial sum at y = y_min.
pub fn fourier_truncation(k: u32, y_min: f64) -> (usize, f64) {
    let mut total = Compensated::default();
    let peak_n = ((k as f64 - 1.0) / (4.0 * PI * y_min)).max(1.0);
    let shift = ln_term(k, peak_n.round().max(1.0) as usize, y_min);
    let mut n = 1usize;
    loop {
        let t = (ln_term(k, n, y_min) - shift).exp();
        total.add(t);
        if n as f64 > peak_n {
            // terms decrease geometrically from here with ratio r
            let next = (ln_term(k, n + 1, y_min) - shift).exp();
            let r = next / t;
            let tail = next / (1.0 - r);
            if r < 1.0 && tail < FOURIER_TAIL * total.value() {
                return (n, tail / total.value());
            }
        }
        n += 1;
    }
}

/// y^{(k-1)/2} |a_f(1)| sum_{n<=N} lambda(n) (4 pi n)^{(k-1)/2} e^{-2 pi n y},
/// so that the mass density is its square times psi(y).
fn amplitude(f: &Eigenform, terms: usize, y: f64) -> f64 {
    let k = f.weight;
    let base = 0.5 * f.ln_a1_sq() + (k as f64 - 1.0) / 2.0 * y.ln();
    (1..=terms)
        .map(|n| f.lambda(n) * (ln_term(k, n, y) + base).exp())
        .collect::<Compensated>()
        .value()
}

fn checked_terms(f: &Eigenform, y_min: f64) -> Result<(usize, f64), MassError> {
    let (need, tail) = fourier_truncation(f.weight, y_min);
    if need > f.len() {
        return Err(MassError::Tail { need, have: f.len() });
    }
    Ok((need, tail))
}

/// Quadrature rule for the mass integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassRule {
    /// Gauss-Legendre on equal panels in y.
    Panels(usize),
    /// Tanh-sinh at the given level.
    TanhSinh(u32),
}

/// Default panel count for the mass integral.
pub const MASS_PANELS: usize = 64;

/// mu_f(psi) = int |f(iy)|^2 y^k psi(y) dy / y.
pub fn mu(f: &Eigenform, psi: &Bump) -> Result<f64, MassError> {
    mu_with(f, psi, MassRule::Panels(MASS_PANELS), None)
}

/// mu_f(psi) with a chosen rule and optional explicit truncation.
pub fn mu_with(f: &Eigenform, psi: &Bump, rule: MassRule, terms: Option<usize>) -> Result<f64, MassError> {
    mu_weighted(f, &|y| psi.eval(y), psi.support, rule, terms)
}

/// int |f(iy)|^2 y^k g(y) dy / y for any weight g supported in `support`.
pub fn mu_weighted(
    f: &Eigenform,
    g: &dyn Fn(f64) -> f64,
    support: (f64, f64),
    rule: MassRule,
    terms: Option<usize>,
) -> Result<f64, MassError> {
    let (need, _) = checked_terms(f, support.0)?;
    let terms = terms.unwrap_or(need).min(f.len());
    let density = |y: f64| {
        let a = amplitude(f, terms, y);
        a * a * g(y)
    };
    let (lo, hi) = support;
    Ok(match rule {
        MassRule::Panels(p) => gl_panels(density, lo, hi, p),
        MassRule::TanhSinh(level) => tanh_sinh(density, lo, hi, level),
    })
}

/// mu_f(psi) summing the given panels in the given order.
pub fn mu_over_panels(f: &Eigenform, psi: &Bump, panels: &[(f64, f64)]) -> Result<f64, MassError> {
    let (terms, _) = checked_terms(f, psi.support.0)?;
    let rule = GaussLegendre::cached(20);
    let mut acc = Compensated::default();
    for &(a, b) in panels {
        for (y, w) in rule.mapped(a, b) {
            let amp = amplitude(f, terms, y);
            acc.add(w * amp * amp * psi.eval(y));
        }
    }
    Ok(acc.value())
}

/// E(psi) = (3 / pi) int psi(y) dy / y.
pub fn expected(psi: &Bump) -> f64 {
    expected_weighted(&|y| psi.eval(y), psi.support)
}

/// (3 / pi) int g(y) dy / y over `support`.
pub fn expected_weighted(g: &dyn Fn(f64) -> f64, support: (f64, f64)) -> f64 {
    3.0 / PI * gl_panels(|y| g(y) / y, support.0, support.1, MASS_PANELS)
}

/// Pair sums of the expanded mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSums {
    /// sum over n != m.
    pub off_diagonal: f64,
    /// sum over n = m.
    pub diagonal: f64,
    /// sum of |terms| over n != m.
    pub off_diagonal_abs: f64,
}

/// Expands mu into |a_f(1)|^2 sum_{n,m} lambda(n) lambda(m) (16 pi^2 nm)^{(k-1)/2}
/// int e^{-2 pi (n+m) y} psi(y) y^{k-1} dy and splits the pairs.
pub fn pair_sums(f: &Eigenform, psi: &Bump) -> Result<PairSums, MassError> {
    let (terms, _) = checked_terms(f, psi.support.0)?;
    let k = f.weight as f64;
    let (lo, hi) = psi.support;
    // ln I_j for j = n + m, with I_j = int e^{-2 pi j y} y^{k-1} psi(y) dy
    let ln_int: Vec<f64> = (0..=2 * terms)
        .map(|j| {
            if j < 2 {
                return f64::NEG_INFINITY;
            }
            let jf = j as f64;
            let phase = |y: f64| -2.0 * PI * jf * y + (k - 1.0) * y.ln();
            // the exponent is concave with maximum at y = (k-1)/(2 pi j), clamped to the support
            let ystar = ((k - 1.0) / (2.0 * PI * jf)).clamp(lo, hi);
            let m = phase(ystar);
            m + gl_panels(|y| (phase(y) - m).exp() * psi.eval(y), lo, hi, MASS_PANELS).ln()
        })
        .collect();
    let ln_c: Vec<f64> = (0..=terms)
        .map(|n| {
            if n == 0 {
                0.0
            } else {
                (k - 1.0) / 2.0 * (4.0 * PI * n as f64).ln()
            }
        })
        .collect();
    let la = f.ln_a1_sq();
    let (mut off, mut diag, mut abs) = (Compensated::default(), Compensated::default(), Compensated::default());
    for n in 1..=terms {
        let ln_nn = la + 2.0 * ln_c[n] + ln_int[2 * n];
        diag.add(f.lambda(n) * f.lambda(n) * ln_nn.exp());
        for m in (n + 1)..=terms {
            let mag = (la + ln_c[n] + ln_c[m] + ln_int[n + m]).exp();
            let t = 2.0 * f.lambda(n) * f.lambda(m) * mag;
            off.add(t);
            abs.add(t.abs());
        }
    }
    Ok(PairSums {
        off_diagonal: off.value(),
        diagonal: diag.value(),
        off_diagonal_abs: abs.value(),
    })
}

/// S_psi: the off-diagonal (n != m) part of the expanded mass.
pub fn s_psi_direct(f: &Eigenform, psi: &Bump) -> Result<f64, MassError> {
    Ok(pair_sums(f, psi)?.off_diagonal)
}

/// Shifted-convolution approximation and the bound on its dropped shifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedApprox {
    pub value: f64,
    /// Shifts summed: 0 < |l| <= l_max.
    pub l_max: usize,
    /// Bound on |l| > l_max using |lambda(n)| <= d(n).
    pub tail: f64,
}

/// l_max = ceil(sqrt(k) log k).
pub fn shift_cutoff(k: u32) -> usize {
    let kf = k as f64;
    (kf.sqrt() * kf.ln()).ceil() as usize
}

fn divisor_count(n: usize) -> f64 {
    crate::expsums::divisor_count(n as u64) as f64
}

/// (pi / (2 L(1, sym^2 f))) sum_{l != 0} sum_n lambda(n) lambda(n+l) / sqrt(n(n+l))
/// exp(-k l^2 / (2 (2n+l)^2)) psi(k / (2 pi (2n+l))).
pub fn s_psi_approx(f: &Eigenform, psi: &Bump) -> Result<ShiftedApprox, MassError> {
    let k = f.weight;
    let kf = k as f64;
    let l_max = shift_cutoff(k);
    // psi(k / (2 pi j)) vanishes unless j lies in (k / (2 pi b), k / (2 pi a))
    let (a, b) = psi.support;
    let j_lo = (kf / (2.0 * PI * b)).floor() as i64;
    let j_hi = (kf / (2.0 * PI * a)).ceil() as i64;
    // lambda(n + l) with 2n + l <= j_hi, rounded up to k / (pi a) + l_max
    let need = (kf / (PI * a)).ceil() as usize + l_max;
    if need > f.len() {
        return Err(MassError::InsufficientEigenData { need, have: f.len() });
    }
    let term = |n: i64, l: i64, lam: &dyn Fn(i64) -> f64| -> f64 {
        let j = (2 * n + l) as f64;
        let g = (-kf * (l * l) as f64 / (2.0 * j * j)).exp();
        lam(n) * lam(n + l) / ((n * (n + l)) as f64).sqrt() * g * psi.eval(kf / (2.0 * PI * j))
    };
    let lambda = |n: i64| f.lambda(n as usize);
    let bound = |n: i64| divisor_count(n as usize);
    let sum_over = |l: i64, lam: &dyn Fn(i64) -> f64| -> f64 {
        // 2n + l in [j_lo, j_hi], n >= 1, n + l >= 1
        let n_lo = ((j_lo - l + 1) / 2).max(1).max(1 - l);
        let n_hi = (j_hi - l) / 2 + 1;
        (n_lo..=n_hi).map(|n| term(n, l, lam)).collect::<Compensated>().value()
    };
    let mut acc = Compensated::default();
    for l in 1..=l_max as i64 {
        acc.add(sum_over(l, &lambda));
        acc.add(sum_over(-l, &lambda));
    }
    let scale = PI / (2.0 * f.l_sym2);
    // Gaussian tail: shifts beyond l_max with |lambda| replaced by d(n)
    let mut tail = Compensated::default();
    let abs_bound = |n: i64| bound(n).abs();
    for l in (l_max as i64 + 1)..=(4 * l_max as i64 + j_hi) {
        let t = sum_over(l, &abs_bound).abs() + sum_over(-l, &abs_bound).abs();
        tail.add(t);
    }
    Ok(ShiftedApprox {
        value: scale * acc.value(),
        l_max,
        tail: scale * tail.value(),
    })
}

/// Contribution of shifts +l and -l separately, for the relabelling symmetry.
pub fn shift_contributions(f: &Eigenform, psi: &Bump, l: usize) -> (f64, f64) {
    let kf = f.weight as f64;
    let (a, b) = psi.support;
    let j_lo = (kf / (2.0 * PI * b)).floor() as i64;
    let j_hi = (kf / (2.0 * PI * a)).ceil() as i64;
    let side = |l: i64| -> f64 {
        let n_lo = ((j_lo - l + 1) / 2).max(1).max(1 - l);
        let n_hi = (j_hi - l) / 2 + 1;
        (n_lo..=n_hi)
            .map(|n| {
                let j = (2 * n + l) as f64;
                f.lambda(n as usize) * f.lambda((n + l) as usize) / ((n * (n + l)) as f64).sqrt()
                    * (-kf * (l * l) as f64 / (2.0 * j * j)).exp()
                    * psi.eval(kf / (2.0 * PI * j))
            })
            .collect::<Compensated>()
            .value()
    };
    let l = l as i64;
    (side(l), side(-l))
}

/// One row of the mass table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassReport {
    pub k: u32,
    pub form_index: usize,
    pub psi_id: String,
    pub mu: f64,
    pub expected: f64,
    pub s_direct: f64,
    pub e_residual: f64,
    pub diagonal: f64,
    pub s_approx: f64,
    /// Relative Fourier tail dropped in mu.
    pub fourier_tail: f64,
    /// Bound on the shifts dropped from s_approx.
    pub shift_tail: f64,
}

/// Short text descriptor of a bump.
pub fn psi_id(psi: &Bump) -> String {
    match psi.kind {
        crate::testfn::BumpKind::PsiSymmetric => format!("psi_symmetric(alpha={})", psi.alpha),
        crate::testfn::BumpKind::HWindow => format!("window({},{})", psi.support.0, psi.support.1),
    }
}

/// mu, E(psi), S_psi, and E_psi := mu - S_psi - E(psi) for one form.
pub fn mass_report(f: &Eigenform, psi: &Bump) -> Result<MassReport, MassError> {
    let (_, fourier_tail) = checked_terms(f, psi.support.0)?;
    let m = mu(f, psi)?;
    let e = expected(psi);
    let pairs = pair_sums(f, psi)?;
    let approx = s_psi_approx(f, psi)?;
    Ok(MassReport {
        k: f.weight,
        form_index: f.conjugacy_id,
        psi_id: psi_id(psi),
        mu: m,
        expected: e,
        s_direct: pairs.off_diagonal,
        e_residual: m - pairs.off_diagonal - e,
        diagonal: pairs.diagonal,
        s_approx: approx.value,
        fourier_tail,
        shift_tail: approx.tail,
    })
}

/// Writes reports as CSV with a header row.
pub fn write_csv<W: std::io::Write>(out: W, rows: &[MassReport]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
