//! Named verification suites with measured residuals, shared by the CLI and the
//! acceptance target.

use crate::expsums::{kloosterman_identity_lhs, kloosterman_identity_rhs, ExpSumError};
use crate::forms::{delta, EigenStore, Eigenform, FormsError};
use crate::mass::{s_psi_approx, s_psi_direct, MassError};
use crate::oscillatory::{nonstationary_bound_check, random_suite, stationary_phase_eval, OscError, PhaseProblem};
use crate::testfn::{mellin, mellin_decay_constant, Bump, ContourSamples, ContourSpec, TestFnError};
use crate::trace::{averaged_petersson_lhs, averaged_petersson_rhs, exact_petersson_check, TraceError, WindowWeights};
use crate::variance::{
    diagonal_asymptotic, diagonal_numeric, variance_report, ConstantPower, ExponentConfig, VarianceError,
};
use num_complex::Complex64;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("eigen-data missing for weights {0:?}")]
    MissingWeights(Vec<u32>),
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Mass(#[from] MassError),
    #[error(transparent)]
    Osc(#[from] OscError),
    #[error(transparent)]
    TestFn(#[from] TestFnError),
    #[error(transparent)]
    ExpSum(#[from] ExpSumError),
    #[error(transparent)]
    Variance(#[from] VarianceError),
    #[error("report serialisation: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which side of a limit a measured value must fall on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    /// Reported only.
    Reported,
}

/// One measured quantity and its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, measured: f64, bound: Bound) -> Self {
        let pass = match bound {
            Bound::AtMost(limit) => measured <= limit,
            Bound::AtLeast(limit) => measured >= limit,
            Bound::Reported => true,
        };
        Check {
            name: name.into(),
            measured,
            bound,
            pass,
        }
    }

    pub fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check::new(name, measured, Bound::AtMost(limit))
    }

    pub fn at_least(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check::new(name, measured, Bound::AtLeast(limit))
    }

    pub fn info(name: impl Into<String>, measured: f64) -> Self {
        Check::new(name, measured, Bound::Reported)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn new(suite: impl Into<String>, checks: Vec<Check>) -> Self {
        SuiteReport {
            suite: suite.into(),
            passed: checks.iter().all(|c| c.pass),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn forms<'a>(store: &'a EigenStore, k: u32) -> Result<&'a [Eigenform], SuiteError> {
    store.get(k).ok_or(SuiteError::MissingWeights(vec![k]))
}

fn require(store: &EigenStore, weights: &[u32]) -> Result<(), SuiteError> {
    let missing = store.missing(weights.iter().copied());
    if missing.is_empty() {
        Ok(())
    } else {
        Err(SuiteError::MissingWeights(missing))
    }
}

/// sum_{x,y,z,w mod c} over the Kloosterman identity against c^3 phi(c), relative error.
pub fn kloosterman(moduli: std::ops::RangeInclusive<u64>, scale: f64) -> Result<SuiteReport, SuiteError> {
    let checks = moduli
        .map(|c| {
            let (lhs, rhs) = (kloosterman_identity_lhs(c)?, kloosterman_identity_rhs(c));
            Ok(Check::at_most(
                format!("identity c={c}"),
                (lhs - rhs).abs() / rhs.abs(),
                1e-6 * scale,
            ))
        })
        .collect::<Result<_, SuiteError>>()?;
    Ok(SuiteReport::new("kloosterman", checks))
}

/// q prod (1 - q^n)^24 through q^n in exact integers.
pub fn delta_by_product(n: usize) -> Vec<i128> {
    let mut p = vec![0i128; n + 1];
    p[0] = 1;
    for m in 1..=n {
        for _ in 0..24 {
            for i in (m..=n).rev() {
                p[i] -= p[i - m];
            }
        }
    }
    let mut out = vec![0i128; n + 1];
    out[1..=n].copy_from_slice(&p[..n]);
    out
}

fn divisor_counts(n: usize) -> Vec<u32> {
    let mut d = vec![0u32; n + 1];
    for a in 1..=n {
        for m in (a..=n).step_by(a) {
            d[m] += 1;
        }
    }
    d
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Hecke recursion at 2, 3, 5, multiplicativity on coprime pairs, the Deligne bound for
/// n <= n_max, and tau(n) for n <= 10 against the product expansion.
pub fn eigenform(store: &EigenStore, weights: &[u32], n_max: usize, scale: f64) -> Result<SuiteReport, SuiteError> {
    require(store, weights)?;
    let mut checks = Vec::new();
    let oracle = delta_by_product(10);
    let exact = delta(10);
    let mismatches = (1..=10)
        .filter(|&n| exact.coeff(n).to_i128() != Some(oracle[n]))
        .count();
    checks.push(Check::at_most("tau(n) n<=10 exact mismatches", mismatches as f64, 0.0));
    if let Some(d) = store.get(12).and_then(|f| f.first()) {
        let worst = (1..=10)
            .map(|n| (d.lambda(n) * (n as f64).powf(5.5) - oracle[n] as f64).abs() / (oracle[n] as f64).abs())
            .fold(0.0, f64::max);
        checks.push(Check::at_most(
            "weight 12 lambda(n) n^{11/2} vs tau(n)",
            worst,
            1e-10 * scale,
        ));
    }
    let divisors = divisor_counts(n_max);
    for &k in weights {
        let (mut recursion, mut multiplicative, mut deligne) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
        for f in forms(store, k)? {
            let top = n_max.min(f.len());
            for p in [2usize, 3, 5] {
                let mut pe = p;
                while pe * p <= top {
                    let lhs = f.lambda(p) * f.lambda(pe);
                    let rhs = f.lambda(pe * p) + f.lambda(pe / p);
                    recursion = recursion.max((lhs - rhs).abs());
                    pe *= p;
                }
            }
            for a in 2..=top {
                for b in a + 1..=top / a {
                    if gcd(a, b) == 1 {
                        multiplicative = multiplicative.max((f.lambda(a * b) - f.lambda(a) * f.lambda(b)).abs());
                    }
                }
            }
            for n in 1..=top {
                deligne = deligne.max(f.lambda(n).abs() - divisors[n] as f64);
            }
        }
        checks.push(Check::at_most(
            format!("k={k} hecke recursion"),
            recursion,
            1e-10 * scale,
        ));
        checks.push(Check::at_most(
            format!("k={k} multiplicativity"),
            multiplicative,
            1e-10 * scale,
        ));
        checks.push(Check::at_most(
            format!("k={k} deligne |lambda(n)| - d(n)"),
            deligne,
            1e-10 * scale,
        ));
    }
    Ok(SuiteReport::new("eigenform", checks))
}

/// |LHS - RHS| of the exact Petersson formula, worst over m, n <= mn_max per weight.
pub fn petersson(store: &EigenStore, weights: &[u32], mn_max: u64, scale: f64) -> Result<SuiteReport, SuiteError> {
    require(store, weights)?;
    let mut checks = Vec::new();
    for &k in weights {
        let fs = forms(store, k)?;
        let mut worst = 0.0f64;
        for m in 1..=mn_max {
            for n in m..=mn_max {
                let s = exact_petersson_check(m, n, fs, k)?;
                worst = worst.max((s.lhs - s.rhs).abs());
            }
        }
        checks.push(Check::at_most(format!("k={k} exact petersson"), worst, 1e-8 * scale));
    }
    Ok(SuiteReport::new("petersson", checks))
}

/// The twenty (m, n) pairs used for the averaged formula.
pub fn averaged_pairs() -> Vec<(u64, u64)> {
    let mut pairs: Vec<(u64, u64)> = (1..=5).flat_map(|m| (m..=5).map(move |n| (m, n))).collect();
    pairs.extend([(1, 10), (2, 10), (3, 7), (5, 10), (10, 10)]);
    pairs
}

/// Residual |LHS - main - Kloosterman term| against `slack` times the budget.
pub fn averaged(
    store: &EigenStore,
    w: &WindowWeights,
    pairs: &[(u64, u64)],
    slack: f64,
) -> Result<SuiteReport, SuiteError> {
    require(store, &w.weights())?;
    let mut checks = Vec::new();
    for &(m, n) in pairs {
        let lhs = averaged_petersson_lhs(m, n, w, store)?;
        let rhs = averaged_petersson_rhs(m, n, w)?;
        let residual = (lhs - rhs.main - rhs.kloosterman_term).abs();
        checks.push(Check::at_most(
            format!("(m,n)=({m},{n}) residual"),
            residual,
            slack * rhs.error_budget,
        ));
    }
    Ok(SuiteReport::new("averaged", checks))
}

/// Round trip on 50 points, psi~(s) = psi~(-s), and the j = 4 decay bound on t in [0, 100].
pub fn mellin_suite(psi: &Bump, scale: f64) -> Result<SuiteReport, SuiteError> {
    let (a, b) = psi.support;
    let spec = ContourSpec::new(1.0, 400.0, ContourSpec::default_step(a.min(1.0 / b)))?;
    let samples = ContourSamples::new(|s| mellin(psi, s), spec);
    let mut round_trip = 0.0f64;
    for i in 0..50 {
        let y = a + (b - a) * (i as f64 + 0.5) / 50.0;
        round_trip = round_trip.max((samples.invert(y, 1e-6)? - psi.eval(y)).abs());
    }
    let mut checks = vec![Check::at_most("round trip sup error", round_trip, 1e-6 * scale)];
    if psi.is_symmetric() {
        let symmetry = [(0.3, 0.0), (0.5, 7.0), (-1.2, 3.5), (2.0, -11.0), (0.0, 25.0)]
            .iter()
            .map(|&(re, im)| {
                let s = Complex64::new(re, im);
                (mellin(psi, s) - mellin(psi, -s)).norm()
            })
            .fold(0.0, f64::max);
        checks.push(Check::at_most("symmetry psi~(s) - psi~(-s)", symmetry, 1e-10 * scale));
    }
    let c4 = mellin_decay_constant(psi, 4, 1.0)?;
    let decay = (0..=400)
        .map(|i| {
            let t = i as f64 * 0.25;
            mellin(psi, Complex64::new(1.0, t)).norm() * (1.0 + t).powi(4) / c4
        })
        .fold(0.0, f64::max);
    checks.push(Check::at_most("(1+|t|)^4 |psi~(1+it)| / C", decay, 1.0));
    Ok(SuiteReport::new("mellin", checks))
}

/// Largest |S_direct - S_approx| over the forms of weight k.
pub fn shifted_residual(forms: &[Eigenform], psi: &Bump) -> Result<(f64, f64), SuiteError> {
    let mut worst = (0.0f64, 0.0f64);
    for f in forms {
        let approx = s_psi_approx(f, psi)?;
        let r = (s_psi_direct(f, psi)? - approx.value).abs();
        if r > worst.0 {
            worst = (r, approx.tail);
        }
    }
    Ok(worst)
}

/// |S_direct - S_approx| <= 10 k^{-1/2 + 0.05} (plus the reported shift tail) per weight,
/// and residuals non-increasing from k to 2k.
pub fn shifted(store: &EigenStore, weights: &[u32], psi: &Bump, scale: f64) -> Result<SuiteReport, SuiteError> {
    require(store, weights)?;
    let mut residuals = std::collections::BTreeMap::new();
    let mut checks = Vec::new();
    for &k in weights {
        let (r, tail) = shifted_residual(forms(store, k)?, psi)?;
        residuals.insert(k, r);
        checks.push(Check::at_most(
            format!("k={k} |direct - approx|"),
            r,
            scale * 10.0 * (k as f64).powf(-0.45) + tail,
        ));
    }
    for (&k, &r) in &residuals {
        if let Some(&r2) = residuals.get(&(2 * k)) {
            checks.push(Check::at_most(format!("residual k={} minus k={k}", 2 * k), r2 - r, 0.0));
        }
    }
    Ok(SuiteReport::new("shifted", checks))
}

/// Fresnel family against 10 envelopes, and the randomized suite with slack 10.
pub fn stationary(seed: u64, cases: usize, scale: f64) -> Result<SuiteReport, SuiteError> {
    let mut checks = Vec::new();
    for lambda in [1.0, 4.0, 16.0, 64.0] {
        let r = stationary_phase_eval(&PhaseProblem::fresnel(lambda, 8.0)?)?;
        checks.push(Check::at_most(
            format!("fresnel lambda={lambda} |direct - main| / envelope"),
            (r.direct - r.main).norm() / r.envelope,
            10.0 * scale,
        ));
    }
    for (i, (p, is_stationary)) in random_suite(seed, cases).iter().enumerate() {
        let ratio = if *is_stationary {
            let r = stationary_phase_eval(p)?;
            (r.direct - r.main).norm() / r.envelope
        } else {
            p.check_bounds(2..=3)?;
            let r = nonstationary_bound_check(p, 2)?;
            r.integral.norm() / r.envelope
        };
        let kind = if *is_stationary { "stationary" } else { "non-stationary" };
        checks.push(Check::at_most(
            format!("random case {i} ({kind}) error / envelope"),
            ratio,
            10.0 * scale,
        ));
    }
    Ok(SuiteReport::new("stationary", checks))
}

/// diagonal_numeric / diagonal_asymptotic across K with |ratio - 1| non-increasing;
/// the residue-form ratio is reported alongside.
pub fn diagonal(ks: &[f64], h: &Bump, psi: &Bump, cfg: &ExponentConfig) -> Result<SuiteReport, SuiteError> {
    let mut checks = Vec::new();
    let mut previous: Option<f64> = None;
    for &big_k in ks {
        let w = WindowWeights::new(big_k, cfg.big_g(big_k), *h, true)?;
        let numeric = diagonal_numeric(&w, psi, psi);
        let displayed = diagonal_asymptotic(&w, psi, psi, cfg, ConstantPower::Displayed)?.total;
        let residue = diagonal_asymptotic(&w, psi, psi, cfg, ConstantPower::Residue)?.total;
        let ratio = numeric / displayed;
        checks.push(Check::info(format!("K={big_k} numeric / displayed asymptotic"), ratio));
        checks.push(Check::info(
            format!("K={big_k} numeric / residue-form asymptotic"),
            numeric / residue,
        ));
        if let Some(prev) = previous {
            checks.push(Check::at_most(
                format!("K={big_k} |ratio - 1| minus previous"),
                (ratio - 1.0).abs() - (prev - 1.0).abs(),
                0.0,
            ));
        }
        previous = Some(ratio);
    }
    Ok(SuiteReport::new("diagonal", checks))
}

/// End-to-end pipeline run twice: nonnegativity, per-form decomposition, byte-identical reports.
pub fn variance(
    store: &EigenStore,
    w: &WindowWeights,
    psi: &Bump,
    cfg: &ExponentConfig,
) -> Result<SuiteReport, SuiteError> {
    let (first, rows) = variance_report(w, psi, psi, store, cfg, false)?;
    let (second, _) = variance_report(w, psi, psi, store, cfg, false)?;
    let (a, b) = (
        serde_json::to_string_pretty(&first)?,
        serde_json::to_string_pretty(&second)?,
    );
    let decomposition = rows
        .iter()
        .map(|r| (r.mu1 - r.s1 - r.e_residual1 - r.expected1).abs())
        .fold(0.0, f64::max);
    let mut checks = vec![
        Check::at_least("forms in window", rows.len() as f64, 1.0),
        Check::at_least("lhs_empirical", first.lhs_empirical, 0.0),
        Check::at_most("max |mu - S - E_res - E|", decomposition, 1e-9),
        Check::at_most(
            "report bytes differing between runs",
            if a == b { 0.0 } else { 1.0 },
            0.0,
        ),
    ];
    checks.extend(first.ratios.iter().map(|(name, v)| Check::info(name.clone(), *v)));
    Ok(SuiteReport::new("variance", checks))
}

#[cfg(test)]
mod tests;
