//! The classical Petersson formula and both sides of its smoothed average
//! over the weight.

use crate::analytic_kernels::{bessel_j_scaled, ln_gamma_real, KernelError};
use crate::expsums::{e, kloosterman, ExpSumError};
use crate::forms::{EigenStore, Eigenform};
use crate::quad::{gl_panels, Compensated};
use crate::testfn::{fourier, hbar, integral, Bump, HbarKind, TestFnError};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

/// Bessel tail bound the exact formula must reach.
pub const BESSEL_TAIL: f64 = 1e-10;
/// Largest modulus either formula will sum to.
pub const MAX_MODULUS: u64 = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("window must satisfy 0 < G <= K (got K = {0}, G = {1})")]
    Scales(f64, f64),
    #[error("eigen-data missing for weights {0:?}")]
    MissingWeights(Vec<u32>),
    #[error("eigen-data stops at n = {have}; need {need}")]
    ShortEigenData { have: usize, need: usize },
    #[error("Bessel tail bound {bound:e} not reached by c = {cap}")]
    Truncation { bound: f64, cap: u64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    ExpSum(#[from] ExpSumError),
    #[error(transparent)]
    TestFn(#[from] TestFnError),
}

/// Harmonic weight 2 pi^2 / ((k - 1) L(1, sym^2 f)).
pub fn harmonic_weight(f: &Eigenform) -> f64 {
    2.0 * PI * PI / ((f.weight as f64 - 1.0) * f.l_sym2)
}

/// Both sides of the Petersson formula for one weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeterssonSides {
    pub lhs: f64,
    pub rhs: f64,
    /// Number of moduli summed on the right.
    pub moduli: u64,
}

/// Smallest C with 2 pi sum_{c > C} (2 pi sqrt(mn) / c)^{k-1} / (k-1)! < tol,
/// using |S(m, n; c)| <= c and |J_nu(x)| <= (x/2)^nu / nu!.
fn bessel_cutoff(m: u64, n: u64, k: u32, tol: f64) -> Result<u64, TraceError> {
    let nu = k as f64 - 1.0;
    let ln_a = nu * (2.0 * PI * ((m * n) as f64).sqrt()).ln() - ln_gamma_real(nu + 1.0);
    // tail <= 2 pi e^{ln_a} C^{1 - nu} / (nu - 1)
    let ln_target = tol.ln() - (2.0 * PI).ln() + (nu - 1.0).ln() - ln_a;
    let c = (-(ln_target) / (nu - 1.0)).exp().ceil().max(1.0);
    if c > MAX_MODULUS as f64 {
        return Err(TraceError::Truncation {
            bound: tol,
            cap: MAX_MODULUS,
        });
    }
    Ok(c as u64)
}

/// lhs = sum_f omega_f lambda_f(m) lambda_f(n), rhs = delta_{mn} + 2 pi i^{-k}
/// sum_c S(m, n; c) / c J_{k-1}(4 pi sqrt(mn) / c).
pub fn exact_petersson_check(m: u64, n: u64, forms: &[Eigenform], k: u32) -> Result<PeterssonSides, TraceError> {
    let need = m.max(n) as usize;
    if let Some(f) = forms.iter().find(|f| f.len() < need) {
        return Err(TraceError::ShortEigenData { have: f.len(), need });
    }
    let lhs: Compensated = forms
        .iter()
        .map(|f| harmonic_weight(f) * f.lambda(m as usize) * f.lambda(n as usize))
        .collect();
    let cap = bessel_cutoff(m, n, k, BESSEL_TAIL)?;
    let x0 = 4.0 * PI * ((m * n) as f64).sqrt();
    let mut sum = Compensated::default();
    for c in 1..=cap {
        let s = kloosterman(m as i64, n as i64, c)?;
        if s == 0.0 {
            continue;
        }
        let j = bessel_j_scaled(k - 1, x0 / c as f64)?.value();
        sum.add(s / c as f64 * j);
    }
    let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let delta = if m == n { 1.0 } else { 0.0 };
    Ok(PeterssonSides {
        lhs: lhs.value(),
        rhs: delta + 2.0 * PI * sign * sum.value(),
        moduli: cap,
    })
}

/// Weighting of the weight sum by a window h.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WindowWeights {
    pub big_k: f64,
    pub big_g: f64,
    pub window: Bump,
    /// Constant multiplier on the window.
    pub amplitude: f64,
    /// Shifted mode uses g(x) = h(x - K/G) at scale G in place of h at scale K.
    pub shifted: bool,
}

impl WindowWeights {
    pub fn new(big_k: f64, big_g: f64, window: Bump, shifted: bool) -> Result<Self, TraceError> {
        if !(big_g > 0.0 && big_g <= big_k) {
            return Err(TraceError::Scales(big_k, big_g));
        }
        Ok(WindowWeights {
            big_k,
            big_g,
            window,
            amplitude: 1.0,
            shifted,
        })
    }

    /// Plain mode at scale K (G = K).
    pub fn plain(big_k: f64, window: Bump) -> Result<Self, TraceError> {
        Self::new(big_k, big_k, window, false)
    }

    /// Scale entering the formula: K in plain mode, G in shifted mode.
    pub fn scale(&self) -> f64 {
        if self.shifted {
            self.big_g
        } else {
            self.big_k
        }
    }

    /// The effective window: h, or g(x) = h(x - K/G).
    pub fn effective_window(&self) -> Bump {
        if !self.shifted {
            return self.window;
        }
        let shift = self.big_k / self.big_g;
        let (a, b) = self.window.support;
        Bump::window(a + shift, b + shift).expect("shifted window keeps a < b")
    }

    /// The same weights multiplied by `a`.
    pub fn scaled(mut self, a: f64) -> Self {
        self.amplitude *= a;
        self
    }

    /// 2 w((k - 1) / scale) for the effective window w.
    pub fn weight(&self, k: u32) -> f64 {
        2.0 * self.amplitude * self.effective_window().eval((k as f64 - 1.0) / self.scale())
    }

    /// Even weights k >= 12 with nonzero weight.
    pub fn weights(&self) -> Vec<u32> {
        let (a, b) = self.effective_window().support;
        let s = self.scale();
        let lo = ((a * s + 1.0).floor() as u32).max(12);
        let hi = (b * s + 1.0).ceil() as u32;
        (lo..=hi).filter(|k| k % 2 == 0 && self.weight(*k) != 0.0).collect()
    }
}

/// sum_k 2 w((k-1)/scale) (2 pi^2 / (k-1)) sum_f lambda_f(m) lambda_f(n) / L(1, sym^2 f).
pub fn averaged_petersson_lhs(m: u64, n: u64, w: &WindowWeights, store: &EigenStore) -> Result<f64, TraceError> {
    let weights = w.weights();
    let missing = store.missing(weights.iter().copied());
    if !missing.is_empty() {
        return Err(TraceError::MissingWeights(missing));
    }
    let need = m.max(n) as usize;
    if !weights.is_empty() && store.truncation() < need {
        return Err(TraceError::ShortEigenData {
            have: store.truncation(),
            need,
        });
    }
    let mut acc = Compensated::default();
    for k in weights {
        let forms = store.get(k).expect("checked above");
        let inner: f64 = forms
            .iter()
            .map(|f| f.lambda(m as usize) * f.lambda(n as usize) / f.l_sym2)
            .collect::<Compensated>()
            .value();
        acc.add(w.weight(k) * 2.0 * PI * PI / (k as f64 - 1.0) * inner);
    }
    Ok(acc.value())
}

/// Right side of the averaged formula split into its pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedRhs {
    pub main: f64,
    pub kloosterman_term: f64,
    pub error_budget: f64,
    /// Moduli summed in the Kloosterman term.
    pub moduli: u64,
}

/// Smallest v = 2^j with |hbar(v')| < 1e-14 at v' = v and 2v.
fn hbar_cutoff(h: &Bump) -> f64 {
    let zero = Complex64::new(0.0, 0.0);
    let mut v = 1.0;
    loop {
        let a = hbar(h, v, zero, HbarKind::Full).norm();
        let b = hbar(h, 2.0 * v, zero, HbarKind::Full).norm();
        if (a < 1e-14 && b < 1e-14) || v > 1e7 {
            return v;
        }
        v *= 2.0;
    }
}

/// int_R v^4 |h^(v)| dv, integrated until |h^(v)| drops below 1e-14 h^(0),
/// where quadrature noise takes over.
/// Memoised per window, since it depends only on h.
pub fn fourier_fourth_moment(h: &Bump) -> f64 {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    static MEMO: OnceLock<Mutex<HashMap<(u64, u64), f64>>> = OnceLock::new();
    let key = (h.support.0.to_bits(), h.support.1.to_bits());
    let memo = MEMO.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = memo.lock().expect("memo poisoned").get(&key) {
        return *v;
    }
    let v = fourth_moment_uncached(h);
    memo.lock().expect("memo poisoned").insert(key, v);
    v
}

fn fourth_moment_uncached(h: &Bump) -> f64 {
    let f = |v: f64| v.powi(4) * fourier(h, v).norm();
    let floor = 1e-14 * fourier(h, 0.0).norm();
    let width = 4.0;
    let mut total = Compensated::default();
    let mut lo = 0.0;
    while lo < 4000.0 {
        total.add(gl_panels(f, lo, lo + width, 8));
        lo += width;
        if fourier(h, lo).norm() < floor {
            break;
        }
    }
    2.0 * total.value()
}

/// main = h^(0) scale 1_{m=n}; Kloosterman term = -sqrt(pi) (mn)^{-1/4} scale
/// Im(e^{-2 pi i/8} sum_c S(m,n;c)/sqrt(c) e(2 sqrt(mn)/c) hbar(c scale^2/(8 pi sqrt(mn))));
/// budget = sqrt(mn)/scale^4 int v^4 |h^(v)| dv + 1_{m=n}.
pub fn averaged_petersson_rhs(m: u64, n: u64, w: &WindowWeights) -> Result<AveragedRhs, TraceError> {
    let h = w.effective_window();
    let k = w.scale();
    let root = ((m * n) as f64).sqrt();
    let diag = if m == n { 1.0 } else { 0.0 };
    let main = w.amplitude * integral(&h) * k * diag;
    let v_cut = hbar_cutoff(&h);
    let cap = ((v_cut * 8.0 * PI * root / (k * k)).ceil() as u64).clamp(1, MAX_MODULUS);
    let zero = Complex64::new(0.0, 0.0);
    let (mut re, mut im) = (Compensated::default(), Compensated::default());
    for c in 1..=cap {
        let s = kloosterman(m as i64, n as i64, c)?;
        if s == 0.0 {
            continue;
        }
        let cf = c as f64;
        let z = e(2.0 * root / cf) * hbar(&h, cf * k * k / (8.0 * PI * root), zero, HbarKind::Full) * (s / cf.sqrt());
        re.add(z.re);
        im.add(z.im);
    }
    let total = Complex64::new(re.value(), im.value()) * Complex64::from_polar(1.0, -PI / 4.0);
    let kloosterman_term = -w.amplitude * PI.sqrt() * root.powf(-0.5) * k * total.im;
    let error_budget = w.amplitude.abs() * root / k.powi(4) * fourier_fourth_moment(&h) + diag;
    Ok(AveragedRhs {
        main,
        kloosterman_term,
        error_budget,
        moduli: cap,
    })
}

/// sum_k 2 w((k-1)/scale) [delta_{mn} + 2 pi i^{-k} sum_c S(m,n;c)/c J_{k-1}(4 pi sqrt(mn)/c)],
/// the weight average of the exact right side; needs no eigen-data.
pub fn averaged_petersson_bessel(m: u64, n: u64, w: &WindowWeights) -> Result<f64, TraceError> {
    let mut acc = Compensated::default();
    for k in w.weights() {
        let cap = bessel_cutoff(m, n, k, BESSEL_TAIL)?;
        let x0 = 4.0 * PI * ((m * n) as f64).sqrt();
        let mut sum = Compensated::default();
        for c in 1..=cap {
            let s = kloosterman(m as i64, n as i64, c)?;
            if s != 0.0 {
                sum.add(s / c as f64 * bessel_j_scaled(k - 1, x0 / c as f64)?.value());
            }
        }
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let delta = if m == n { 1.0 } else { 0.0 };
        acc.add(w.weight(k) * (delta + 2.0 * PI * sign * sum.value()));
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests;
