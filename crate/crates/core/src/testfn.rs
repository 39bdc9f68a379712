//! Smooth compactly supported test functions, their Mellin transforms and
//! inversions, and the oscillatory transforms built from a window h.

use crate::analytic_kernels::{gamma, KernelError};
use crate::quad::{gl_panels, gl_panels_complex, tanh_sinh, Compensated};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Highest derivative order supported by [`Bump::derivative`].
pub const MAX_DERIVATIVE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestFnError {
    #[error("bump parameter alpha = {0} must exceed 1")]
    Alpha(f64),
    #[error("window ({0}, {1}) must satisfy 0 < a < b")]
    Window(f64, f64),
    #[error("derivative order {0} exceeds {MAX_DERIVATIVE}")]
    Order(usize),
    #[error("contour needs step > 0 and height >= 10 * step (got T = {height}, step = {step})")]
    Contour { height: f64, step: f64 },
    #[error("inversion tail estimate {tail:e} exceeds tolerance {tol:e}")]
    Tail { tail: f64, tol: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Shape of the canonical bump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpKind {
    /// exp(-1/(1 - t^2)) with t = log y / log alpha, symmetric under y -> 1/y.
    PsiSymmetric,
    /// The same profile mapped linearly onto a window (a, b); (1, 2) by default.
    HWindow,
}

/// A smooth bump with compact support in (0, infinity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub kind: BumpKind,
    /// Support parameter alpha for the symmetric family.
    pub alpha: f64,
    /// Support endpoints (a, b).
    pub support: (f64, f64),
}

/// exp(-1/(1 - t^2)) and its first `n` derivatives in t.
fn profile_derivatives(t: f64, n: usize) -> [f64; MAX_DERIVATIVE + 1] {
    let mut out = [0.0; MAX_DERIVATIVE + 1];
    if t.abs() >= 1.0 {
        return out;
    }
    let f0 = (-1.0 / (1.0 - t * t)).exp();
    if f0 == 0.0 {
        return out;
    }
    // g = -1/(1 - t^2) = -(1/(1-t) + 1/(1+t)) / 2
    let mut g = [0.0; MAX_DERIVATIVE + 1];
    let mut fact = 1.0;
    for (m, gm) in g.iter_mut().enumerate().skip(1) {
        fact *= m as f64;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        *gm = -0.5 * fact * ((1.0 - t).powi(-(m as i32) - 1) + sign * (1.0 + t).powi(-(m as i32) - 1));
    }
    out[0] = f0;
    // (e^g)^{(n)} = sum_k C(n-1, k) g^{(k+1)} (e^g)^{(n-1-k)}
    for m in 1..=n {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for k in 0..m {
            acc += binom * g[k + 1] * out[m - 1 - k];
            binom = binom * (m - 1 - k) as f64 / (k + 1) as f64;
        }
        out[m] = acc;
    }
    out
}

/// Taylor coefficients of outer(inner(y0 + e)) up to order 8, given outer's
/// derivatives at inner(y0) and inner's Taylor coefficients c_1..c_8.
fn compose_jets(
    outer: &[f64; MAX_DERIVATIVE + 1],
    inner: &[f64; MAX_DERIVATIVE + 1],
    n: usize,
) -> [f64; MAX_DERIVATIVE + 1] {
    let mut result = [0.0; MAX_DERIVATIVE + 1];
    result[0] = outer[0];
    // power holds (inner - inner(y0))^j
    let mut power = [0.0; MAX_DERIVATIVE + 1];
    power[0] = 1.0;
    let mut fact = 1.0;
    for j in 1..=n {
        let mut next = [0.0; MAX_DERIVATIVE + 1];
        for (a, pa) in power.iter().enumerate().take(n + 1) {
            if *pa == 0.0 {
                continue;
            }
            for b in 1..=(n - a) {
                next[a + b] += pa * inner[b];
            }
        }
        power = next;
        fact *= j as f64;
        for m in 0..=n {
            result[m] += outer[j] / fact * power[m];
        }
    }
    result
}

impl Bump {
    /// Canonical bump of the requested kind; the window kind lives on (1, 2).
    pub fn canonical(alpha: f64, kind: BumpKind) -> Result<Self, TestFnError> {
        match kind {
            BumpKind::PsiSymmetric => {
                if !(alpha > 1.0) {
                    return Err(TestFnError::Alpha(alpha));
                }
                Ok(Bump {
                    kind,
                    alpha,
                    support: (1.0 / alpha, alpha),
                })
            }
            BumpKind::HWindow => Bump::window(1.0, 2.0),
        }
    }

    /// The bump profile mapped onto (a, b).
    pub fn window(a: f64, b: f64) -> Result<Self, TestFnError> {
        if !(a > 0.0 && b > a) {
            return Err(TestFnError::Window(a, b));
        }
        Ok(Bump {
            kind: BumpKind::HWindow,
            alpha: b / a,
            support: (a, b),
        })
    }

    /// True when b(y) = b(1/y) by construction.
    pub fn is_symmetric(&self) -> bool {
        self.kind == BumpKind::PsiSymmetric
    }

    fn local(&self, y: f64) -> f64 {
        match self.kind {
            BumpKind::PsiSymmetric => y.ln() / self.alpha.ln(),
            BumpKind::HWindow => {
                let (a, b) = self.support;
                (2.0 * y - a - b) / (b - a)
            }
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        if y <= self.support.0 || y >= self.support.1 {
            return 0.0;
        }
        profile_derivatives(self.local(y), 0)[0]
    }

    /// j-th derivative in y for j <= 8.
    pub fn derivative(&self, j: usize, y: f64) -> Result<f64, TestFnError> {
        if j > MAX_DERIVATIVE {
            return Err(TestFnError::Order(j));
        }
        Ok(self.derivatives(y, j)[j])
    }

    /// Derivatives 0..=n at y.
    pub fn derivatives(&self, y: f64, n: usize) -> [f64; MAX_DERIVATIVE + 1] {
        let n = n.min(MAX_DERIVATIVE);
        if y <= self.support.0 || y >= self.support.1 {
            return [0.0; MAX_DERIVATIVE + 1];
        }
        let t = self.local(y);
        let outer = profile_derivatives(t, n);
        match self.kind {
            BumpKind::HWindow => {
                let (a, b) = self.support;
                let scale = 2.0 / (b - a);
                let mut out = outer;
                let mut s = 1.0;
                for v in out.iter_mut().take(n + 1) {
                    *v *= s;
                    s *= scale;
                }
                out
            }
            BumpKind::PsiSymmetric => {
                // t(y0 + e) - t(y0) = sum_m (-1)^{m-1} e^m / (m y0^m log alpha)
                let la = self.alpha.ln();
                let mut inner = [0.0; MAX_DERIVATIVE + 1];
                for (m, c) in inner.iter_mut().enumerate().skip(1) {
                    let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
                    *c = sign / (m as f64 * y.powi(m as i32) * la);
                }
                let taylor = compose_jets(&outer, &inner, n);
                let mut out = [0.0; MAX_DERIVATIVE + 1];
                let mut fact = 1.0;
                for m in 0..=n {
                    if m > 0 {
                        fact *= m as f64;
                    }
                    out[m] = taylor[m] * fact;
                }
                out
            }
        }
    }

    /// Log-support (log a, log b).
    pub fn log_support(&self) -> (f64, f64) {
        (self.support.0.ln(), self.support.1.ln())
    }
}

/// C with (1 + |t|)^j |psi~(sigma + it)| <= C for all t, from j integrations by parts
/// of phi(u) = psi(e^{-u}): C = 2^j max(int |phi| e^{sigma u} du, int |phi^(j)| e^{sigma u} du).
pub fn mellin_decay_constant(psi: &Bump, j: usize, sigma: f64) -> Result<f64, TestFnError> {
    if j > MAX_DERIVATIVE {
        return Err(TestFnError::Order(j));
    }
    let (lo, hi) = (-psi.support.1.ln(), -psi.support.0.ln());
    let phi_j = |u: f64| -> f64 {
        let y = (-u).exp();
        // y(u + e) = y e^{-e}
        let mut inner = [0.0; MAX_DERIVATIVE + 1];
        let mut fact = 1.0;
        for (m, c) in inner.iter_mut().enumerate().skip(1) {
            fact *= m as f64;
            *c = y * if m % 2 == 0 { 1.0 } else { -1.0 } / fact;
        }
        let taylor = compose_jets(&psi.derivatives(y, j), &inner, j);
        taylor[j] * (1..=j).product::<usize>() as f64
    };
    let m0 = gl_panels(|u| psi.eval((-u).exp()).abs() * (sigma * u).exp(), lo, hi, 64);
    let mj = gl_panels(|u| phi_j(u).abs() * (sigma * u).exp(), lo, hi, 64);
    Ok(2f64.powi(j as i32) * m0.max(mj))
}

/// Gauss-Legendre panel count for an integrand oscillating at angular
/// frequency `omega` over an interval of length `width`.
fn panels_for(omega: f64, width: f64) -> usize {
    32 + (omega.abs() * width / (2.0 * PI)).ceil() as usize
}

/// psi~(s) = int_0^inf psi(1/y) y^{s-1} dy, via y = e^u over the compact support.
pub fn mellin(psi: &Bump, s: Complex64) -> Complex64 {
    mellin_fn(|y| psi.eval(y), psi.support, s)
}

/// Mellin transform of any function vanishing outside `support`.
pub fn mellin_fn<F: Fn(f64) -> f64>(psi: F, support: (f64, f64), s: Complex64) -> Complex64 {
    // psi(1/y) is supported on log y in (-log b, -log a)
    let (lo, hi) = (-support.1.ln(), -support.0.ln());
    let panels = panels_for(s.im, hi - lo);
    gl_panels_complex(|u| (s * u).exp() * psi((-u).exp()), lo, hi, panels)
}

/// Line Re s = sigma sampled on |t| <= height with spacing step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub sigma: f64,
    pub height: f64,
    pub step: f64,
}

impl ContourSpec {
    pub fn new(sigma: f64, height: f64, step: f64) -> Result<Self, TestFnError> {
        if !(step > 0.0 && height >= 10.0 * step) {
            return Err(TestFnError::Contour { height, step });
        }
        Ok(ContourSpec { sigma, height, step })
    }

    /// Step min(0.05, 1 / (4 log(1 / y_min))) resolving y^{it} down to y_min.
    pub fn default_step(y_min: f64) -> f64 {
        let l = (1.0 / y_min).ln();
        if l > 0.0 {
            0.05f64.min(1.0 / (4.0 * l))
        } else {
            0.05
        }
    }
}

/// Samples of a Mellin transform on a vertical line, reusable across y.
#[derive(Debug, Clone)]
pub struct ContourSamples {
    spec: ContourSpec,
    values: Vec<Complex64>,
    edge: f64,
}

impl ContourSamples {
    /// Samples psi~(sigma + i t) for t = 0, step, ..., height. Real test
    /// functions have psi~(conj s) = conj psi~(s), so t >= 0 suffices.
    pub fn new<F: Fn(Complex64) -> Complex64>(psi_tilde: F, spec: ContourSpec) -> Self {
        let n = (spec.height / spec.step).round() as usize;
        let values: Vec<Complex64> = (0..=n)
            .map(|j| psi_tilde(Complex64::new(spec.sigma, j as f64 * spec.step)))
            .collect();
        let edge = values.last().map_or(0.0, |v| v.norm());
        ContourSamples { spec, values, edge }
    }

    /// Tail estimate for |t| > T assuming |psi~| (1 + |t|)^4 is non-increasing past T.
    pub fn tail(&self, y: f64) -> f64 {
        let t = self.spec.height;
        y.powf(self.spec.sigma) / PI * self.edge * (1.0 + t) / 3.0
    }

    /// (1 / 2 pi) int psi~(sigma + it) y^{sigma + it} dt by the trapezoid rule.
    pub fn invert(&self, y: f64, tol: f64) -> Result<f64, TestFnError> {
        let tail = self.tail(y);
        if tail > tol {
            return Err(TestFnError::Tail { tail, tol });
        }
        let ly = y.ln();
        let mut acc = Compensated::default();
        for (j, v) in self.values.iter().enumerate() {
            let t = j as f64 * self.spec.step;
            let w = if j == 0 { 0.5 } else { 1.0 };
            let phase = Complex64::new(0.0, t * ly).exp();
            acc.add(w * (v * phase).re);
        }
        Ok(y.powf(self.spec.sigma) * self.spec.step / PI * acc.value())
    }
}

/// psi(y) = (1 / 2 pi i) int_(sigma) psi~(s) y^s ds, truncated at |Im s| = T.
pub fn mellin_invert<F: Fn(Complex64) -> Complex64>(
    psi_tilde: F,
    spec: ContourSpec,
    y: f64,
    tol: f64,
) -> Result<f64, TestFnError> {
    ContourSamples::new(psi_tilde, spec).invert(y, tol)
}

/// Which transform of the window to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HbarKind {
    /// int h(sqrt u) / sqrt(2 pi u) u^{w/2} e^{iuv} du
    Full,
    /// int h(sqrt u) / sqrt(2 pi u) u^{w/2} cos(uv) du
    RealPart,
}

/// Transforms of h through u = t^2: sqrt(2/pi) int h(t) t^w e^{i t^2 v} dt (or cos).
pub fn hbar(h: &Bump, v: f64, w: Complex64, kind: HbarKind) -> Complex64 {
    let (a, b) = h.support;
    let panels = panels_for(2.0 * b * v, b - a);
    let c = (2.0 / PI).sqrt();
    gl_panels_complex(
        |t| {
            let amp = h.eval(t) * Complex64::new(t, 0.0).powc(w);
            let phase = t * t * v;
            match kind {
                HbarKind::Full => amp * Complex64::new(phase.cos(), phase.sin()),
                HbarKind::RealPart => amp * phase.cos(),
            }
        },
        a,
        b,
        panels,
    ) * c
}

/// int h(sqrt u) / sqrt(2 pi u) u^{w/2 - s} du, the u-integral in the Mellin
/// transform of the cosine transform.
fn hbar_moment(h: &Bump, w: Complex64, s: Complex64) -> Complex64 {
    let (a, b) = h.support;
    let c = (2.0 / PI).sqrt();
    let expo = w - s * 2.0;
    gl_panels_complex(|t| h.eval(t) * Complex64::new(t, 0.0).powc(expo), a, b, 16) * c
}

/// Mellin transform of v -> hbar^Re_w(v) in closed form for 0 < Re s < 1:
/// Gamma(s) cos(pi s / 2) int h(sqrt u) / sqrt(2 pi u) u^{w/2} u^{-s} du.
pub fn hbar_real_mellin(h: &Bump, w: Complex64, s: Complex64) -> Result<Complex64, TestFnError> {
    let g = gamma(s)?;
    Ok(g * (s * PI / 2.0).cos() * hbar_moment(h, w, s))
}

/// The same expression with the u^{-s} factor dropped.
pub fn hbar_real_mellin_without_power(h: &Bump, w: Complex64, s: Complex64) -> Result<Complex64, TestFnError> {
    let g = gamma(s)?;
    Ok(g * (s * PI / 2.0).cos() * hbar_moment(h, w, Complex64::new(0.0, 0.0)))
}

/// int_0^inf hbar^Re_w(v) v^{s-1} dv by quadrature of the definition, for
/// 0 < Re s < 1. The integrand decays faster than any power of v because h
/// vanishes near 0; the range is cut at v_max.
pub fn hbar_real_mellin_direct(h: &Bump, w: Complex64, s: Complex64, v_max: f64) -> Complex64 {
    let f = |v: f64| hbar(h, v, w, HbarKind::RealPart) * Complex64::new(v, 0.0).powc(s - 1.0);
    let near_re = tanh_sinh(|v| f(v).re, 0.0, 1.0, 7);
    let near_im = tanh_sinh(|v| f(v).im, 0.0, 1.0, 7);
    let (_, b) = h.support;
    // oscillation in v has frequency at most b^2
    let panels = panels_for(b * b, v_max - 1.0);
    Complex64::new(near_re, near_im) + gl_panels_complex(f, 1.0, v_max, panels)
}

/// h^(xi) = int h(x) e(-x xi) dx.
pub fn fourier(h: &Bump, xi: f64) -> Complex64 {
    let (a, b) = h.support;
    let omega = 2.0 * PI * xi;
    gl_panels_complex(
        |x| h.eval(x) * Complex64::new(0.0, -omega * x).exp(),
        a,
        b,
        panels_for(omega, b - a),
    )
}

/// int h(x) dx.
pub fn integral(h: &Bump) -> f64 {
    let (a, b) = h.support;
    gl_panels(|x| h.eval(x), a, b, 16)
}

#[cfg(test)]
mod tests;
