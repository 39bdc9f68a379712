//! Shared quadrature rules and compensated summation.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    let (_, d) = legendre_with_derivative(n, z);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared rule of the given order, built once per process.
    pub fn cached(n: usize) -> &'static GaussLegendre {
        static CACHE: OnceLock<Mutex<HashMap<usize, &'static GaussLegendre>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Box::leak(Box::new(GaussLegendre::new(n))))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let mut acc = Compensated::default();
        for (x, w) in self.mapped(a, b) {
            acc.add(w * f(x));
        }
        acc.value()
    }

    /// Composite rule over `panels` equal sub-intervals.
    pub fn integrate_panels<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64, panels: usize) -> f64 {
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        let mut acc = Compensated::default();
        for p in 0..panels {
            let lo = a + width * p as f64;
            let hi = if p + 1 == panels { b } else { lo + width };
            for (x, w) in self.mapped(lo, hi) {
                acc.add(w * f(x));
            }
        }
        acc.value()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Panel-wise Gauss–Legendre with a fixed 20-point rule.
pub fn gl_panels<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    GaussLegendre::cached(20).integrate_panels(f, a, b, panels)
}

/// Complex-valued panel integration with the fixed 20-point rule.
pub fn gl_panels_complex<F: FnMut(f64) -> num_complex::Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
) -> num_complex::Complex64 {
    let rule = GaussLegendre::cached(20);
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut re = Compensated::default();
    let mut im = Compensated::default();
    for p in 0..panels {
        let lo = a + width * p as f64;
        let hi = if p + 1 == panels { b } else { lo + width };
        for (x, w) in rule.mapped(lo, hi) {
            let v = f(x) * w;
            re.add(v.re);
            im.add(v.im);
        }
    }
    num_complex::Complex64::new(re.value(), im.value())
}

/// Tanh-sinh (double exponential) quadrature on [a, b].
///
/// `level` halves the step `level` times starting from h = 1/2; the sum is
/// truncated where the weights underflow.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, level: u32) -> f64 {
    let half = 0.5 * (b - a);
    let h = 0.5f64.powi(level as i32 + 1);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let mut acc = Compensated::default();
    let kmax = (4.0 / h).ceil() as i64;
    for k in -kmax..=kmax {
        let t = k as f64 * h;
        let u = pi2 * t.sinh();
        let cu = u.cosh();
        // 1 - x and 1 + x kept separately to avoid cancellation near the ends.
        let e = (-2.0 * u.abs()).exp();
        let one_minus_abs = 2.0 * e / (1.0 + e);
        if one_minus_abs == 0.0 {
            continue;
        }
        let w = pi2 * t.cosh() / (cu * cu);
        if w < 1e-300 {
            continue;
        }
        let node = if u >= 0.0 {
            b - half * one_minus_abs
        } else {
            a + half * one_minus_abs
        };
        if node <= a || node >= b {
            continue;
        }
        acc.add(w * f(node));
    }
    h * half * acc.value()
}

/// Neumaier compensated accumulator; summation order is the caller's order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for Compensated {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut c = Compensated::default();
        for x in iter {
            c.add(x);
        }
        c
    }
}

/// Compensated sum of an iterator in iteration order.
pub fn sum_compensated<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<Compensated>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(10);
        let v = rule.integrate(|x| x.powi(19) + 3.0 * x.powi(18), -1.0, 1.0);
        assert!((v - 6.0 / 19.0).abs() < 1e-14);
        let w: f64 = rule.mapped(-1.0, 1.0).map(|(_, w)| w).sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_order_rule_has_centre_node() {
        let rule = GaussLegendre::new(5);
        assert!(rule.nodes[2].abs() < 1e-15);
        assert!((rule.weights[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        let v = tanh_sinh(|x| 1.0 / x.sqrt(), 0.0, 1.0, 6);
        assert!((v - 2.0).abs() < 1e-10, "{v}");
        let g = tanh_sinh(|x| (-x * x).exp(), -1.0, 2.0, 6);
        let p = gl_panels(|x| (-x * x).exp(), -1.0, 2.0, 4);
        assert!((g - p).abs() < 1e-13);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s = sum_compensated([1e16, 1.0, -1e16, 1.0]);
        assert_eq!(s, 2.0);
    }
}
