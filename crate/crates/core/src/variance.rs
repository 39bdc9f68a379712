//! Quantum variance along the vertical geodesic: the empirical weighted sum
//! over a short weight window, the diagonal term (numeric and asymptotic),
//! the predicted main term, an off-diagonal probe, and the equidistribution
//! census.

use crate::analytic_kernels::{zeta, KernelError, EULER_GAMMA};
use crate::expsums::{e, kloosterman, ExpSumError};
use crate::forms::{cusp_dimension, EigenStore};
use crate::mass::{expected, mu, pair_sums, MassError};
use crate::quad::{gl_panels, gl_panels_complex, Compensated, GaussLegendre};
use crate::testfn::{mellin_fn, Bump, ContourSpec};
use crate::trace::WindowWeights;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarianceError {
    #[error("eigen-data missing for weights {0:?}")]
    MissingWeights(Vec<u32>),
    #[error("test function is not symmetric: psi({y}) = {at_y} but psi(1/y) = {at_inverse}")]
    Asymmetric { y: f64, at_y: f64, at_inverse: f64 },
    #[error("exponent constraint {0} fails")]
    Exponents(&'static str),
    #[error("off-diagonal probe limited to K <= {limit}; got K = {big_k}")]
    CostGuard { big_k: f64, limit: f64 },
    #[error(transparent)]
    Mass(#[from] MassError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    ExpSum(#[from] ExpSumError),
}

/// Exponents theta (G = K^theta), delta (d <= K^delta), eta (m >= K^eta),
/// and the small epsilon used in numeric cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentConfig {
    pub theta: f64,
    pub delta: f64,
    pub eta: f64,
    pub eps: f64,
}

impl Default for ExponentConfig {
    fn default() -> Self {
        ExponentConfig::new(0.9, 9.0 / 160.0, 13.0 / 80.0, 0.05).expect("default exponents are admissible")
    }
}

impl ExponentConfig {
    /// Checks delta > (1 - theta)/2, theta > 2/3 + 4 eta/3 and theta + eta - delta > 1
    /// in their epsilon-free form; `eps_margin` says how large epsilon may be.
    pub fn new(theta: f64, delta: f64, eta: f64, eps: f64) -> Result<Self, VarianceError> {
        let cfg = ExponentConfig { theta, delta, eta, eps };
        if !(theta > 0.0 && theta < 1.0) {
            return Err(VarianceError::Exponents("0 < theta < 1"));
        }
        if !(delta > (1.0 - theta) / 2.0) {
            return Err(VarianceError::Exponents("delta > (1 - theta) / 2"));
        }
        if !(theta > 2.0 / 3.0 + 4.0 * eta / 3.0) {
            return Err(VarianceError::Exponents("theta > 2/3 + 4 eta / 3"));
        }
        if !(theta + eta - delta > 1.0) {
            return Err(VarianceError::Exponents("theta + eta - delta > 1"));
        }
        if !(eps > 0.0) {
            return Err(VarianceError::Exponents("eps > 0"));
        }
        Ok(cfg)
    }

    /// Largest epsilon for which the first two constraints still hold with +epsilon.
    pub fn eps_margin(&self) -> f64 {
        (2.0 * self.delta - (1.0 - self.theta)).min(self.theta - 2.0 / 3.0 - 4.0 * self.eta / 3.0)
    }

    /// G = K^theta.
    pub fn big_g(&self, big_k: f64) -> f64 {
        big_k.powf(self.theta)
    }
}

/// A real test function on the positive reals with compact support.
pub trait TestFunction: Sync {
    fn eval(&self, y: f64) -> f64;
    fn support(&self) -> (f64, f64);
}

impl TestFunction for Bump {
    fn eval(&self, y: f64) -> f64 {
        Bump::eval(self, y)
    }
    fn support(&self) -> (f64, f64) {
        self.support
    }
}

/// Linear combination of bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combination(pub Vec<(f64, Bump)>);

impl TestFunction for Combination {
    fn eval(&self, y: f64) -> f64 {
        self.0.iter().map(|(c, b)| c * b.eval(y)).sum()
    }
    fn support(&self) -> (f64, f64) {
        self.0.iter().fold((f64::INFINITY, 0.0), |(lo, hi), (_, b)| {
            (lo.min(b.support.0), hi.max(b.support.1))
        })
    }
}

/// psi~(s) = int psi(1/y) y^{s-1} dy.
pub fn mellin_of(psi: &dyn TestFunction, s: Complex64) -> Complex64 {
    mellin_fn(|y| psi.eval(y), psi.support(), s)
}

/// psi~'(0) = int psi(1/y) log y dy / y.
pub fn mellin_derivative_at_zero(psi: &dyn TestFunction) -> f64 {
    let (a, b) = psi.support();
    gl_panels(|u| u * psi.eval((-u).exp()), -b.ln(), -a.ln(), 64)
}

const SYMMETRY_GRID: usize = 64;

/// Rejects psi unless psi(y) = psi(1/y) on a grid over the support.
pub fn check_symmetric(psi: &dyn TestFunction) -> Result<(), VarianceError> {
    let (a, b) = psi.support();
    for i in 0..=SYMMETRY_GRID {
        let y = a * (b / a).powf(i as f64 / SYMMETRY_GRID as f64);
        let (at_y, at_inverse) = (psi.eval(y), psi.eval(1.0 / y));
        if (at_y - at_inverse).abs() > 1e-12 * (1.0 + at_y.abs()) {
            return Err(VarianceError::Asymmetric { y, at_y, at_inverse });
        }
    }
    Ok(())
}

/// One eigenform's contribution to the empirical variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormRow {
    pub k: u32,
    pub form_index: usize,
    /// h((k - 1 - K) / G) with the window amplitude.
    pub weight: f64,
    pub l_sym2: f64,
    pub mu1: f64,
    pub expected1: f64,
    pub s1: f64,
    pub e_residual1: f64,
    pub mu2: f64,
    pub expected2: f64,
    pub s2: f64,
    pub e_residual2: f64,
}

impl FormRow {
    /// L(1, sym^2 f) (mu1 - E1)(mu2 - E2) times the window weight.
    pub fn contribution(&self) -> f64 {
        self.weight * self.l_sym2 * (self.mu1 - self.expected1) * (self.mu2 - self.expected2)
    }
}

/// Window weight h((k - 1 - K)/G), i.e. half the Petersson weight.
fn window_weight(w: &WindowWeights, k: u32) -> f64 {
    w.weight(k) / 2.0
}

/// Mass data for every form in the window, ordered by (k, form index).
pub fn window_rows(
    w: &WindowWeights,
    psi1: &Bump,
    psi2: &Bump,
    store: &EigenStore,
) -> Result<Vec<FormRow>, VarianceError> {
    check_symmetric(psi1)?;
    check_symmetric(psi2)?;
    let weights = w.weights();
    let missing = store.missing(weights.iter().copied());
    if !missing.is_empty() {
        return Err(VarianceError::MissingWeights(missing));
    }
    let (e1, e2) = (expected(psi1), expected(psi2));
    let per_k: Result<Vec<Vec<FormRow>>, VarianceError> = weights
        .par_iter()
        .map(|&k| {
            let weight = window_weight(w, k);
            store
                .get(k)
                .expect("checked above")
                .iter()
                .map(|f| {
                    let (mu1, mu2) = (mu(f, psi1)?, mu(f, psi2)?);
                    let (p1, p2) = (pair_sums(f, psi1)?, pair_sums(f, psi2)?);
                    Ok(FormRow {
                        k,
                        form_index: f.conjugacy_id,
                        weight,
                        l_sym2: f.l_sym2,
                        mu1,
                        expected1: e1,
                        s1: p1.off_diagonal,
                        e_residual1: p1.diagonal - e1,
                        mu2,
                        expected2: e2,
                        s2: p2.off_diagonal,
                        e_residual2: p2.diagonal - e2,
                    })
                })
                .collect()
        })
        .collect();
    Ok(per_k?.into_iter().flatten().collect())
}

/// Ordered compensated sum of the row contributions.
pub fn lhs_from_rows(rows: &[FormRow]) -> f64 {
    rows.iter().map(FormRow::contribution).collect::<Compensated>().value()
}

/// sum_k h((k-1-K)/G) sum_f L(1, sym^2 f) (mu_f(psi1) - E(psi1)) (mu_f(psi2) - E(psi2)).
pub fn variance_empirical(
    w: &WindowWeights,
    psi1: &Bump,
    psi2: &Bump,
    store: &EigenStore,
) -> Result<f64, VarianceError> {
    Ok(lhs_from_rows(&window_rows(w, psi1, psi2, store)?))
}

/// Writes rows as CSV with a header.
pub fn write_rows_csv<W: std::io::Write>(out: W, rows: &[FormRow]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads rows written by `write_rows_csv`.
pub fn read_rows_csv<R: std::io::Read>(input: R) -> Result<Vec<FormRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// The split of the empirical sum into S S and the three terms carrying E_psi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CauchySchwarz {
    pub lhs: f64,
    /// sum w L S1 S2.
    pub shifted_part: f64,
    pub deviation: f64,
    /// sqrt(wLE1^2) sqrt(wLS2^2) + sqrt(wLE2^2) sqrt(wLS1^2) + sqrt(wLE1^2) sqrt(wLE2^2).
    pub bound: f64,
}

pub fn cauchy_schwarz(rows: &[FormRow]) -> CauchySchwarz {
    let sum = |f: &dyn Fn(&FormRow) -> f64| {
        rows.iter()
            .map(|r| r.weight * r.l_sym2 * f(r))
            .collect::<Compensated>()
            .value()
    };
    let lhs = lhs_from_rows(rows);
    let shifted_part = sum(&|r| r.s1 * r.s2);
    let (ee1, ee2) = (
        sum(&|r| r.e_residual1.powi(2)).sqrt(),
        sum(&|r| r.e_residual2.powi(2)).sqrt(),
    );
    let (ss1, ss2) = (sum(&|r| r.s1.powi(2)).sqrt(), sum(&|r| r.s2.powi(2)).sqrt());
    CauchySchwarz {
        lhs,
        shifted_part,
        deviation: (lhs - shifted_part).abs(),
        bound: ee1 * ss2 + ee2 * ss1 + ee1 * ee2,
    }
}

/// Integration range in t = (k-1)/G: support of g(t) = h(t - K/G).
fn t_support(w: &WindowWeights) -> (f64, f64) {
    let shift = w.big_k / w.big_g;
    let (a, b) = w.window.support;
    (a + shift, b + shift)
}

fn g_of(w: &WindowWeights, t: f64) -> f64 {
    w.amplitude * w.window.eval(t - w.big_k / w.big_g)
}

/// Exponent of the Gaussian factor beyond which a (n, m) pair is dropped.
pub const GAUSSIAN_CUT: f64 = 46.0;

/// Numeric diagonal term and its enumeration statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagonalNumeric {
    pub value: f64,
    /// Part from n1 = n2, m1 = m2.
    pub dominant: f64,
    /// Part from n1(n1+m1) = n2(n2+m2) with n1 != n2.
    pub sporadic: f64,
    /// Number of (n1, m1, n2, m2, d1, d2) tuples with a nonzero integral.
    pub tuples: usize,
    pub sporadic_tuples: usize,
}

/// Enumeration cutoffs for the diagonal sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalOptions {
    /// Largest n considered; `None` uses the bound implied by the supports.
    pub n_max: Option<u64>,
    pub gaussian_cut: f64,
}

impl Default for DiagonalOptions {
    fn default() -> Self {
        DiagonalOptions {
            n_max: None,
            gaussian_cut: GAUSSIAN_CUT,
        }
    }
}

/// Both signs of each m_i give identical terms.
const SIGN_MULTIPLICITY: f64 = 4.0;

/// G sum 1_{n1(n1+m1) = n2(n2+m2)} / (d1 d2 sqrt(N1 N2)) g*^(0), summing over all
/// nonzero m_i and all n_i, d_i >= 1.
pub fn diagonal_numeric(w: &WindowWeights, psi1: &dyn TestFunction, psi2: &dyn TestFunction) -> f64 {
    diagonal_numeric_with(w, psi1, psi2, DiagonalOptions::default()).value
}

pub fn diagonal_numeric_with(
    w: &WindowWeights,
    psi1: &dyn TestFunction,
    psi2: &dyn TestFunction,
    opts: DiagonalOptions,
) -> DiagonalNumeric {
    let big_g = w.big_g;
    let (t_lo, t_hi) = t_support(w);
    let (k_lo, k_hi) = (t_lo * big_g + 1.0, t_hi * big_g + 1.0);
    let (s1, s2) = (psi1.support(), psi2.support());
    // d (2n + m) lies in (k / (2 pi b), k / (2 pi a)) for each support (a, b)
    let sum_max = (k_hi / (2.0 * PI * s1.0.min(s2.0))).floor() as u64;
    let m_ratio = (2.0 * opts.gaussian_cut / k_lo).sqrt();
    let mut by_product: BTreeMap<u64, Vec<(u64, u64)>> = BTreeMap::new();
    for s in 3..=sum_max {
        // m <= s sqrt(2 cut / k) and n = (s - m) / 2
        let m_top = ((s as f64) * m_ratio).floor() as u64;
        for m in 1..=m_top.min(s - 2) {
            if (s - m) % 2 != 0 {
                continue;
            }
            let n = (s - m) / 2;
            if n == 0 || opts.n_max.is_some_and(|cap| n > cap) {
                continue;
            }
            by_product.entry(n * (n + m)).or_default().push((n, m));
        }
    }
    let d_range = |s: u64, sup: (f64, f64)| -> (u64, u64) {
        let lo = (k_lo / (2.0 * PI * sup.1 * s as f64)).floor().max(1.0) as u64;
        let hi = (k_hi / (2.0 * PI * sup.0 * s as f64)).ceil() as u64;
        (lo, hi)
    };
    let groups: Vec<(u64, Vec<(u64, u64)>)> = by_product.into_iter().collect();
    let parts: Vec<(f64, f64, usize, usize)> = groups
        .par_iter()
        .map(|(product, members)| {
            let mut dom = Compensated::default();
            let mut spo = Compensated::default();
            let (mut count, mut sporadic_count) = (0usize, 0usize);
            for &(n1, m1) in members {
                for &(n2, m2) in members {
                    let (sa, sb) = (2 * n1 + m1, 2 * n2 + m2);
                    let (da, db) = (d_range(sa, s1), d_range(sb, s2));
                    for d1 in da.0..=da.1 {
                        for d2 in db.0..=db.1 {
                            let v = g_star_hat_zero(w, psi1, psi2, (d1, sa, m1), (d2, sb, m2), opts.gaussian_cut);
                            if v == 0.0 {
                                continue;
                            }
                            let term = v / ((d1 * d2) as f64 * *product as f64);
                            if n1 == n2 {
                                dom.add(term);
                                count += 1;
                            } else {
                                spo.add(term);
                                sporadic_count += 1;
                                count += 1;
                            }
                        }
                    }
                }
            }
            (dom.value(), spo.value(), count, sporadic_count)
        })
        .collect();
    let mut dominant = Compensated::default();
    let mut sporadic = Compensated::default();
    let (mut tuples, mut sporadic_tuples) = (0, 0);
    for (d, s, c, sc) in parts {
        dominant.add(d);
        sporadic.add(s);
        tuples += c;
        sporadic_tuples += sc;
    }
    let scale = SIGN_MULTIPLICITY * big_g;
    DiagonalNumeric {
        value: scale * (dominant.value() + sporadic.value()),
        dominant: scale * dominant.value(),
        sporadic: scale * sporadic.value(),
        tuples,
        sporadic_tuples,
    }
}

/// int g*(t) dt where g*(t) = g(t) (tG/16) psi1((tG+1)/(2 pi d1 s1)) psi2((tG+1)/(2 pi d2 s2))
/// exp(-(tG+1) m1^2 / (2 s1^2) - (tG+1) m2^2 / (2 s2^2)), with s_i = 2 n_i + m_i.
fn g_star_hat_zero(
    w: &WindowWeights,
    psi1: &dyn TestFunction,
    psi2: &dyn TestFunction,
    (d1, s1, m1): (u64, u64, u64),
    (d2, s2, m2): (u64, u64, u64),
    cut: f64,
) -> f64 {
    let big_g = w.big_g;
    let (mut lo, mut hi) = t_support(w);
    for (d, s, psi) in [(d1, s1, psi1), (d2, s2, psi2)] {
        let scale = 2.0 * PI * (d * s) as f64;
        let (a, b) = psi.support();
        lo = lo.max((scale * a - 1.0) / big_g);
        hi = hi.min((scale * b - 1.0) / big_g);
    }
    if hi <= lo {
        return 0.0;
    }
    let c1 = (m1 * m1) as f64 / (2.0 * (s1 * s1) as f64);
    let c2 = (m2 * m2) as f64 / (2.0 * (s2 * s2) as f64);
    if (lo * big_g + 1.0) * (c1 + c2) > cut {
        return 0.0;
    }
    let (r1, r2) = (2.0 * PI * (d1 * s1) as f64, 2.0 * PI * (d2 * s2) as f64);
    gl_panels(
        |t| {
            let k = t * big_g + 1.0;
            g_of(w, t) * t * big_g / 16.0 * psi1.eval(k / r1) * psi2.eval(k / r2) * (-k * (c1 + c2)).exp()
        },
        lo,
        hi,
        8,
    )
}

/// Contour for the zeta-zeta line integral on Re s = 1.
pub fn default_line_contour(psi1: &dyn TestFunction, psi2: &dyn TestFunction) -> ContourSpec {
    let y_min = psi1
        .support()
        .0
        .min(psi2.support().0)
        .min(1.0 / psi1.support().1)
        .min(1.0 / psi2.support().1);
    ContourSpec::new(1.0, 400.0, ContourSpec::default_step(y_min)).expect("height exceeds ten steps")
}

/// (1 / 2 pi i) int_{(1)} psi1~(-s) psi2~(s) zeta(1 - s) zeta(1 + s) ds by the
/// trapezoid rule on |Im s| <= T.
pub fn zeta_line_integral(
    psi1: &dyn TestFunction,
    psi2: &dyn TestFunction,
    spec: &ContourSpec,
) -> Result<f64, VarianceError> {
    let steps = (spec.height / spec.step).round() as i64;
    let values: Result<Vec<f64>, KernelError> = (-steps..=steps)
        .into_par_iter()
        .map(|j| {
            let s = Complex64::new(spec.sigma, j as f64 * spec.step);
            let v = mellin_of(psi1, -s) * mellin_of(psi2, s) * zeta(1.0 - s)? * zeta(1.0 + s)?;
            Ok(v.re)
        })
        .collect();
    Ok(spec.step / (2.0 * PI) * values?.into_iter().collect::<Compensated>().value())
}

/// sqrt(2/pi) int h(t) (1 + t G/K)^p [log(1 + t G/K)] dt, the substituted form of
/// int_0^inf h(sqrt u) / sqrt(2 pi u) (1 + sqrt(u) G/K)^p [log(...)] du.
fn window_moment(w: &WindowWeights, power: f64, with_log: bool) -> f64 {
    let (a, b) = w.window.support;
    let r = w.big_g / w.big_k;
    (2.0 / PI).sqrt()
        * w.amplitude
        * gl_panels(
            |t| {
                let f = 1.0 + t * r;
                let l = if with_log { f.ln() } else { 1.0 };
                w.window.eval(t) * f.powf(power) * l
            },
            a,
            b,
            32,
        )
}

/// Mellin data shared by the asymptotic formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MellinData {
    pub psi1_at_0: f64,
    pub psi2_at_0: f64,
    pub psi2_derivative_at_0: f64,
    pub line_integral: f64,
}

pub fn mellin_data(
    psi1: &dyn TestFunction,
    psi2: &dyn TestFunction,
    spec: &ContourSpec,
) -> Result<MellinData, VarianceError> {
    Ok(MellinData {
        psi1_at_0: mellin_of(psi1, Complex64::new(0.0, 0.0)).re,
        psi2_at_0: mellin_of(psi2, Complex64::new(0.0, 0.0)).re,
        psi2_derivative_at_0: mellin_derivative_at_zero(psi2),
        line_integral: zeta_line_integral(psi1, psi2, spec)?,
    })
}

/// The four displayed terms of the diagonal asymptotic and its error sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagonalAsymptotic {
    /// log K term, with (1 + sqrt(u) G/K)^{1/2}.
    pub log_term: f64,
    /// (1 + sqrt(u) G/K)^{1/2} log(1 + sqrt(u) G/K) term.
    pub log_correction: f64,
    /// gamma, log(4 pi) and psi2~'(0) term, with (1 + sqrt(u) G/K).
    pub constant_term: f64,
    /// zeta(1 - s) zeta(1 + s) line-integral term.
    pub line_term: f64,
    pub total: f64,
    /// K^{2+eps} / G.
    pub error_k2_over_g: f64,
    /// K^{-1/2+eps} G^2.
    pub error_g2: f64,
}

/// Which power of (1 + sqrt(u) G/K) multiplies the constant term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstantPower {
    /// Power 1, as displayed.
    Displayed,
    /// Power 1/2, which is what the residue computation produces.
    Residue,
}

fn diagonal_terms(
    w: &WindowWeights,
    m: &MellinData,
    eps: f64,
    corrections: bool,
    power: ConstantPower,
) -> DiagonalAsymptotic {
    let (k, g) = (w.big_k, w.big_g);
    let scale = k.sqrt() * g;
    let moment = |p: f64, log: bool| {
        if corrections {
            window_moment(w, p, log)
        } else if log {
            0.0
        } else {
            window_moment(w, 0.0, false)
        }
    };
    let pp = m.psi1_at_0 * m.psi2_at_0;
    let c32 = SQRT_2 * PI / 32.0;
    let c16 = SQRT_2 * PI / 16.0;
    let log_term = scale * k.ln() * c32 * pp * moment(0.5, false);
    let log_correction = scale * c32 * pp * moment(0.5, true);
    let constant_term = scale
        * moment(if power == ConstantPower::Displayed { 1.0 } else { 0.5 }, false)
        * (c16 * (1.5 * EULER_GAMMA - (4.0 * PI).ln()) * pp + c16 * m.psi1_at_0 * m.psi2_derivative_at_0);
    let line_term = scale * c16 * moment(0.5, false) * m.line_integral;
    DiagonalAsymptotic {
        log_term,
        log_correction,
        constant_term,
        line_term,
        total: [log_term, log_correction, constant_term, line_term]
            .into_iter()
            .collect::<Compensated>()
            .value(),
        error_k2_over_g: k.powf(2.0 + eps) / g,
        error_g2: k.powf(-0.5 + eps) * g * g,
    }
}

/// Four-term asymptotic of the diagonal, including the G/K correction factors.
pub fn diagonal_asymptotic(
    w: &WindowWeights,
    psi1: &dyn TestFunction,
    psi2: &dyn TestFunction,
    cfg: &ExponentConfig,
    power: ConstantPower,
) -> Result<DiagonalAsymptotic, VarianceError> {
    check_symmetric(psi1)?;
    check_symmetric(psi2)?;
    let m = mellin_data(psi1, psi2, &default_line_contour(psi1, psi2))?;
    Ok(diagonal_terms(w, &m, cfg.eps, true, power))
}

/// The same terms with every (1 + sqrt(u) G/K) factor set to 1.
pub fn diagonal_asymptotic_uncorrected(w: &WindowWeights, m: &MellinData, eps: f64) -> DiagonalAsymptotic {
    diagonal_terms(w, m, eps, false, ConstantPower::Displayed)
}

/// Predicted variance V(psi1, psi2): the diagonal asymptotic in the limit G/K -> 0.
pub fn variance_main_term(
    w: &WindowWeights,
    psi1: &dyn TestFunction,
    psi2: &dyn TestFunction,
) -> Result<f64, VarianceError> {
    check_symmetric(psi1)?;
    check_symmetric(psi2)?;
    let m = mellin_data(psi1, psi2, &default_line_contour(psi1, psi2))?;
    Ok(main_term_from(w, &m))
}

/// V(psi1, psi2) from precomputed Mellin data.
pub fn main_term_from(w: &WindowWeights, m: &MellinData) -> f64 {
    let (k, g) = (w.big_k, w.big_g);
    let i_h = window_moment(w, 0.0, false);
    let pp = m.psi1_at_0 * m.psi2_at_0;
    let c32 = SQRT_2 * PI / 32.0;
    let c16 = SQRT_2 * PI / 16.0;
    let terms = [
        k.sqrt() * g * k.ln() * c32 * pp * i_h,
        k.sqrt()
            * g
            * i_h
            * (c16 * (1.5 * EULER_GAMMA - (4.0 * PI).ln()) * pp + c16 * m.psi1_at_0 * m.psi2_derivative_at_0),
        k.sqrt() * g * c16 * i_h * m.line_integral,
    ];
    terms.into_iter().collect::<Compensated>().value()
}

/// f(n1, n2, m1, m2) = 2 sqrt(N1 N2) - 2 n1 n2 - n1 m2 - n2 m1 with N_i = n_i (n_i + m_i).
pub fn od_phase(n1: f64, n2: f64, m1: f64, m2: f64) -> f64 {
    2.0 * (n1 * (n1 + m1) * n2 * (n2 + m2)).sqrt() - 2.0 * n1 * n2 - n1 * m2 - n2 * m1
}

/// d f / d x at n1 = x, written as
/// sqrt(n2(n2+m2)) (sqrt((x+m1)/x) + sqrt(x/(x+m1))) - 2 n2 - m2.
pub fn od_phase_dx(x: f64, n2: f64, m1: f64, m2: f64) -> f64 {
    (n2 * (n2 + m2)).sqrt() * (((x + m1) / x).sqrt() + (x / (x + m1)).sqrt()) - 2.0 * n2 - m2
}

/// Stationary point m1 n2 / m2 of the zero-frequency phase.
pub fn od_stationary_point(n2: f64, m1: f64, m2: f64) -> f64 {
    m1 * n2 / m2
}

/// Largest K for the off-diagonal probe.
pub const OD_PROBE_LIMIT: f64 = 500.0;

/// Off-diagonal sum over the restricted ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdProbe {
    pub od: f64,
    /// |OD| K^{-11/8}.
    pub scaled: f64,
    pub tuples: usize,
    /// Largest |df/dx| at the zero-frequency stationary point over the sampled tuples.
    pub stationary_residual: f64,
}

/// One side (d, n, m) of an off-diagonal tuple with its factor of g* on the t-grid.
struct OdSide {
    d: u64,
    big_n: u64,
    /// psi((tG + 1) / (2 pi d s)) exp(-(tG + 1) m^2 / (2 s^2)) at each grid node.
    amp: Vec<f64>,
    /// Range of grid nodes where `amp` is nonzero.
    live: (usize, usize),
}

/// Gauss-Legendre nodes over the t-support, shared by every tuple.
struct TGrid {
    t: Vec<f64>,
    /// Quadrature weight times sqrt(2/pi) g(t) t G / 16.
    base: Vec<f64>,
}

impl TGrid {
    fn new(w: &WindowWeights, panels: usize) -> Self {
        let (lo, hi) = t_support(w);
        let rule = GaussLegendre::cached(20);
        let width = (hi - lo) / panels as f64;
        let (t, base) = (0..panels)
            .flat_map(|p| rule.mapped(lo + width * p as f64, lo + width * (p + 1) as f64))
            .map(|(t, wt)| (t, wt * (2.0 / PI).sqrt() * g_of(w, t) * t * w.big_g / 16.0))
            .unzip();
        TGrid { t, base }
    }

    fn side(&self, big_g: f64, psi: &dyn TestFunction, d: u64, n: u64, m: u64) -> OdSide {
        let s = 2 * n + m;
        let r = 2.0 * PI * (d * s) as f64;
        let c = (m * m) as f64 / (2.0 * (s * s) as f64);
        let amp: Vec<f64> = self
            .t
            .iter()
            .map(|&t| {
                let k = t * big_g + 1.0;
                psi.eval(k / r) * (-k * c).exp()
            })
            .collect();
        let first = amp.iter().position(|&a| a != 0.0).unwrap_or(amp.len());
        let last = amp.iter().rposition(|&a| a != 0.0).map_or(first, |i| i + 1);
        OdSide {
            d,
            big_n: n * (n + m),
            amp,
            live: (first, last),
        }
    }
}

/// Ranges d_i <= K^delta, K^eta <= |m_i| <= K^{1/2+eps}/d_i, c d1 d2 <= K^{1-theta+eps},
/// and d_i (2 n_i + m_i) inside the supports. Both signs of each m_i give the same term.
pub fn od_probe(
    w: &WindowWeights,
    psi1: &dyn TestFunction,
    psi2: &dyn TestFunction,
    cfg: &ExponentConfig,
) -> Result<OdProbe, VarianceError> {
    let (big_k, big_g) = (w.big_k, w.big_g);
    if big_k > OD_PROBE_LIMIT {
        return Err(VarianceError::CostGuard {
            big_k,
            limit: OD_PROBE_LIMIT,
        });
    }
    let (t_lo, t_hi) = t_support(w);
    let (k_lo, k_hi) = (t_lo * big_g + 1.0, t_hi * big_g + 1.0);
    let d_max = big_k.powf(cfg.delta).floor() as u64;
    let m_min = big_k.powf(cfg.eta).ceil() as u64;
    let c_budget = big_k.powf(1.0 - cfg.theta + cfg.eps);
    let triples = |sup: (f64, f64)| -> Vec<(u64, u64, u64)> {
        let mut out = Vec::new();
        for d in 1..=d_max {
            let m_max = (big_k.powf(0.5 + cfg.eps) / d as f64).floor() as u64;
            let s_lo = (k_lo / (2.0 * PI * sup.1 * d as f64)).floor() as u64;
            let s_hi = (k_hi / (2.0 * PI * sup.0 * d as f64)).ceil() as u64;
            for m in m_min..=m_max {
                for s in s_lo.max(m + 2)..=s_hi {
                    if (s - m) % 2 == 0 && k_lo * (m * m) as f64 / (2.0 * (s * s) as f64) <= GAUSSIAN_CUT {
                        out.push((d, (s - m) / 2, m));
                    }
                }
            }
        }
        out
    };
    let (left, right) = (triples(psi1.support()), triples(psi2.support()));
    let mut stationary_residual: f64 = 0.0;
    for &(_, n2, m2) in right.iter().step_by((right.len() / 16).max(1)) {
        for &(_, _, m1) in left.iter().step_by((left.len() / 4).max(1)) {
            let x0 = od_stationary_point(n2 as f64, m1 as f64, m2 as f64);
            stationary_residual = stationary_residual.max(od_phase_dx(x0, n2 as f64, m1 as f64, m2 as f64).abs());
        }
    }
    // largest phase t^2 v comes from the smallest N1 N2 and the largest c
    let n_min = |v: &[(u64, u64, u64)]| v.iter().map(|&(_, n, m)| n * (n + m)).min().unwrap_or(1) as f64;
    let v_max = c_budget.max(1.0) * big_g * big_g / (8.0 * PI * (n_min(&left) * n_min(&right)).sqrt());
    let panels = 8 + (v_max * (t_hi * t_hi - t_lo * t_lo) / PI).ceil() as usize;
    let grid = TGrid::new(w, panels);
    let build = |v: &[(u64, u64, u64)], psi: &dyn TestFunction| -> Vec<OdSide> {
        v.par_iter().map(|&(d, n, m)| grid.side(big_g, psi, d, n, m)).collect()
    };
    let (left, right) = (build(&left, psi1), build(&right, psi2));
    let parts: Result<Vec<(Complex64, usize)>, VarianceError> = left
        .par_iter()
        .map(|a| {
            let mut re = Compensated::default();
            let mut im = Compensated::default();
            let mut count = 0usize;
            let mut product = vec![0.0; grid.t.len()];
            for b in &right {
                let (lo, hi) = (a.live.0.max(b.live.0), a.live.1.min(b.live.1));
                let c_max = (c_budget / (a.d * b.d) as f64).floor() as u64;
                if lo >= hi || c_max == 0 {
                    continue;
                }
                for i in lo..hi {
                    product[i] = grid.base[i] * a.amp[i] * b.amp[i];
                }
                let root = ((a.big_n * b.big_n) as f64).sqrt();
                for c in 1..=c_max {
                    let v = c as f64 * big_g * big_g / (8.0 * PI * root);
                    let varpi: Complex64 = (lo..hi)
                        .map(|i| Complex64::from_polar(product[i], grid.t[i] * grid.t[i] * v))
                        .sum();
                    let s = kloosterman(a.big_n as i64, b.big_n as i64, c)?;
                    let z = s / (c as f64).sqrt() * e(2.0 * root / c as f64) * varpi
                        / ((a.d * b.d) as f64 * root.powf(1.5));
                    re.add(z.re);
                    im.add(z.im);
                    count += 1;
                }
            }
            Ok((Complex64::new(re.value(), im.value()), count))
        })
        .collect();
    let mut re = Compensated::default();
    let mut im = Compensated::default();
    let mut tuples = 0;
    for (z, c) in parts? {
        re.add(z.re);
        im.add(z.im);
        tuples += c;
    }
    let total = Complex64::new(re.value(), im.value());
    let od = -SIGN_MULTIPLICITY * PI.sqrt() * big_g * (Complex64::from_polar(1.0, -FRAC_PI_4) * total).im;
    Ok(OdProbe {
        od,
        scaled: od.abs() * big_k.powf(-11.0 / 8.0),
        tuples,
        stationary_residual,
    })
}

/// g*-bar(v) = int_0^inf g*(sqrt u) / sqrt(2 pi u) e^{iuv} du = sqrt(2/pi) int g*(t) e^{i t^2 v} dt,
/// integrated adaptively over the exact support of g*.
pub fn g_star_bar(
    w: &WindowWeights,
    psi1: &dyn TestFunction,
    psi2: &dyn TestFunction,
    (d1, s1, m1): (u64, u64, u64),
    (d2, s2, m2): (u64, u64, u64),
    v: f64,
) -> Complex64 {
    let big_g = w.big_g;
    let (mut lo, mut hi) = t_support(w);
    for (d, s, psi) in [(d1, s1, psi1), (d2, s2, psi2)] {
        let scale = 2.0 * PI * (d * s) as f64;
        let (a, b) = psi.support();
        lo = lo.max((scale * a - 1.0) / big_g);
        hi = hi.min((scale * b - 1.0) / big_g);
    }
    if hi <= lo {
        return Complex64::new(0.0, 0.0);
    }
    let c1 = (m1 * m1) as f64 / (2.0 * (s1 * s1) as f64);
    let c2 = (m2 * m2) as f64 / (2.0 * (s2 * s2) as f64);
    let (r1, r2) = (2.0 * PI * (d1 * s1) as f64, 2.0 * PI * (d2 * s2) as f64);
    // phase t^2 v turns by (hi^2 - lo^2) v radians across the range
    let panels = 8 + ((hi * hi - lo * lo) * v / PI).ceil() as usize;
    (2.0 / PI).sqrt()
        * gl_panels_complex(
            |t| {
                let k = t * big_g + 1.0;
                let amp =
                    g_of(w, t) * t * big_g / 16.0 * psi1.eval(k / r1) * psi2.eval(k / r2) * (-k * (c1 + c2)).exp();
                Complex64::from_polar(amp, t * t * v)
            },
            lo,
            hi,
            panels,
        )
}

/// The same weight on the shared grid the probe uses.
pub fn g_star_bar_grid(
    w: &WindowWeights,
    psi1: &dyn TestFunction,
    psi2: &dyn TestFunction,
    (d1, n1, m1): (u64, u64, u64),
    (d2, n2, m2): (u64, u64, u64),
    v: f64,
    panels: usize,
) -> Complex64 {
    let grid = TGrid::new(w, panels);
    let (a, b) = (
        grid.side(w.big_g, psi1, d1, n1, m1),
        grid.side(w.big_g, psi2, d2, n2, m2),
    );
    (0..grid.t.len())
        .map(|i| Complex64::from_polar(grid.base[i] * a.amp[i] * b.amp[i], grid.t[i] * grid.t[i] * v))
        .sum()
}

/// Census of forms whose mass deviates from the expected value by more than a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Census {
    pub total: usize,
    pub exceeders: usize,
    pub threshold: f64,
}

impl Census {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.exceeders as f64 / self.total as f64
        }
    }
}

/// Counts forms over the window with |mu_f(psi) - E(psi)| > threshold.
pub fn census_with_threshold(
    w: &WindowWeights,
    psi: &Bump,
    store: &EigenStore,
    threshold: f64,
) -> Result<Census, VarianceError> {
    let weights = w.weights();
    let missing = store.missing(weights.iter().copied());
    if !missing.is_empty() {
        return Err(VarianceError::MissingWeights(missing));
    }
    let e_psi = expected(psi);
    let deviations: Result<Vec<Vec<f64>>, MassError> = weights
        .par_iter()
        .map(|&k| {
            store
                .get(k)
                .expect("checked above")
                .iter()
                .map(|f| Ok((mu(f, psi)? - e_psi).abs()))
                .collect()
        })
        .collect();
    let deviations: Vec<f64> = deviations?.into_iter().flatten().collect();
    Ok(Census {
        total: deviations.len(),
        exceeders: deviations.iter().filter(|&&d| d > threshold).count(),
        threshold,
    })
}

/// Census at the threshold K^{-1/4 + eps}.
pub fn que_census(
    w: &WindowWeights,
    psi: &Bump,
    cfg: &ExponentConfig,
    store: &EigenStore,
) -> Result<Census, VarianceError> {
    census_with_threshold(w, psi, store, w.big_k.powf(-0.25 + cfg.eps))
}

/// sum over the window's weights of dim S_k.
pub fn window_dimension(w: &WindowWeights) -> usize {
    w.weights().into_iter().map(cusp_dimension).sum()
}

/// Everything the variance pipeline reports for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub lhs_empirical: f64,
    pub diag_numeric: f64,
    pub diag_asymptotic: f64,
    pub diagonal_terms: DiagonalAsymptotic,
    pub main_term: f64,
    pub od_probe: Option<f64>,
    pub ratios: BTreeMap<String, f64>,
    pub cauchy_schwarz: CauchySchwarz,
    pub census: Census,
    pub forms: usize,
    pub window: WindowWeights,
    pub exponents: ExponentConfig,
}

/// Runs the full pipeline for one window.
pub fn variance_report(
    w: &WindowWeights,
    psi1: &Bump,
    psi2: &Bump,
    store: &EigenStore,
    cfg: &ExponentConfig,
    with_od: bool,
) -> Result<(VarianceReport, Vec<FormRow>), VarianceError> {
    let rows = window_rows(w, psi1, psi2, store)?;
    let lhs = lhs_from_rows(&rows);
    let m = mellin_data(psi1, psi2, &default_line_contour(psi1, psi2))?;
    let diag_asym = diagonal_terms(w, &m, cfg.eps, true, ConstantPower::Displayed);
    let diag_residue = diagonal_terms(w, &m, cfg.eps, true, ConstantPower::Residue);
    let diag_num = diagonal_numeric(w, psi1, psi2);
    let main = main_term_from(w, &m);
    let od = if with_od {
        Some(od_probe(w, psi1, psi2, cfg)?.od)
    } else {
        None
    };
    let census = que_census(w, psi1, cfg, store)?;
    let mut ratios = BTreeMap::new();
    ratios.insert("lhs_over_main".to_string(), lhs / main);
    ratios.insert("lhs_over_diag_numeric".to_string(), lhs / diag_num);
    ratios.insert("diag_numeric_over_asymptotic".to_string(), diag_num / diag_asym.total);
    ratios.insert(
        "diag_numeric_over_residue_form".to_string(),
        diag_num / diag_residue.total,
    );
    ratios.insert("exceeder_fraction".to_string(), census.fraction());
    let cs = cauchy_schwarz(&rows);
    ratios.insert("shifted_part_over_diag_numeric".to_string(), cs.shifted_part / diag_num);
    Ok((
        VarianceReport {
            lhs_empirical: lhs,
            diag_numeric: diag_num,
            diag_asymptotic: diag_asym.total,
            diagonal_terms: diag_asym,
            main_term: main,
            od_probe: od,
            ratios,
            cauchy_schwarz: cs,
            census,
            forms: rows.len(),
            window: *w,
            exponents: *cfg,
        },
        rows,
    ))
}

#[cfg(test)]
mod tests;
