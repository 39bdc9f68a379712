//! Oscillatory integrals: Poisson summation on a residue class, the
//! first-derivative decay test, the stationary-phase main term, and
//! derivatives of compositions.

use crate::expsums::e;
use crate::quad::{Compensated, GaussLegendre};
use crate::testfn::Bump;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OscError {
    #[error("{0} is not negligible at the edge of its range")]
    Range(&'static str),
    #[error("|phase'({t})| = {value} is below the floor R = {floor}")]
    DerivativeFloor { t: f64, value: f64, floor: f64 },
    #[error("phase has no stationary point in the support")]
    NoStationaryPoint,
    #[error("phase has {0} stationary points in the support")]
    MultipleStationaryPoints(usize),
    #[error("hypothesis {name} fails: {lhs} < {rhs}")]
    Hypothesis { name: &'static str, lhs: f64, rhs: f64 },
    #[error("declared {which} bound fails for derivative {j} at t = {t}: {value} > {bound}")]
    DeclaredBound {
        which: &'static str,
        j: usize,
        t: f64,
        value: f64,
        bound: f64,
    },
    #[error("invalid support ({0}, {1})")]
    Support(f64, f64),
    #[error("modulus must be positive")]
    Modulus,
}

/// Map (t, j) to the j-th derivative at t.
pub type Jet = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

/// Size scales declared for a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scales {
    /// Amplitude size: |h| <= X.
    pub x: f64,
    /// Amplitude length scale: |h^(j)| <= X V^{-j}.
    pub v: f64,
    /// Support length.
    pub v1: f64,
    /// Phase size: |f^(j)| <= Y Q^{-j}.
    pub y: f64,
    /// Phase length scale.
    pub q: f64,
    /// Floor for |f'| in the non-stationary case.
    pub r: f64,
}

/// Integral of amplitude times an oscillating exponential of the phase.
#[derive(Clone)]
pub struct PhaseProblem {
    pub amplitude: Jet,
    pub phase: Jet,
    pub support: (f64, f64),
    pub scales: Scales,
}

impl fmt::Debug for PhaseProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseProblem")
            .field("support", &self.support)
            .field("scales", &self.scales)
            .finish_non_exhaustive()
    }
}

/// Points used to check declared bounds.
pub const BOUND_GRID: usize = 50;
/// Points used to measure scales.
const DENSE_GRID: usize = 4000;
/// Highest amplitude derivative checked.
pub const AMPLITUDE_ORDER: usize = 4;

fn grid(support: (f64, f64), points: usize) -> impl Iterator<Item = f64> {
    let (a, b) = support;
    (0..points).map(move |i| a + (b - a) * (i as f64 + 0.5) / points as f64)
}

fn sup_on_grid(jet: &Jet, j: usize, support: (f64, f64), points: usize) -> f64 {
    grid(support, points).map(|t| jet(t, j).abs()).fold(0.0, f64::max)
}

/// Bump of half-width `half` centred at `centre`, as an amplitude jet.
pub fn bump_amplitude(centre: f64, half: f64) -> Result<Jet, OscError> {
    if !(half > 0.0) {
        return Err(OscError::Support(centre - half, centre + half));
    }
    let bump = Bump::window(1.0, 1.0 + 2.0 * half).map_err(|_| OscError::Support(centre - half, centre + half))?;
    let offset = 1.0 + half - centre;
    Ok(Arc::new(move |t, j| bump.derivatives(t + offset, j)[j]))
}

/// Polynomial phase sum_i c_i (t - t0)^i.
pub fn polynomial_phase(t0: f64, coeffs: Vec<f64>) -> Jet {
    Arc::new(move |t, j| {
        let x = t - t0;
        coeffs
            .iter()
            .enumerate()
            .skip(j)
            .map(|(i, &c)| c * (i - j + 1..=i).map(|m| m as f64).product::<f64>() * x.powi((i - j) as i32))
            .sum()
    })
}

impl PhaseProblem {
    /// Problem whose X, V come from a dense sampling of the amplitude and
    /// whose Y comes from phase derivatives 1..=3 at the given Q, so that the
    /// declared bounds hold with the factor 2 used by `check_bounds`.
    pub fn measured(amplitude: Jet, phase: Jet, support: (f64, f64), q: f64) -> Result<Self, OscError> {
        let (a, b) = support;
        if !(b > a) {
            return Err(OscError::Support(a, b));
        }
        let x = sup_on_grid(&amplitude, 0, support, DENSE_GRID);
        let v = (1..=AMPLITUDE_ORDER)
            .map(|j| {
                let m = sup_on_grid(&amplitude, j, support, DENSE_GRID);
                if m == 0.0 {
                    f64::INFINITY
                } else {
                    (2.0 * x / m).powf(1.0 / j as f64)
                }
            })
            .fold(f64::INFINITY, f64::min)
            .min(b - a);
        let y = (1..=3)
            .map(|j| sup_on_grid(&phase, j, support, DENSE_GRID) * q.powi(j as i32) / 2.0)
            .fold(0.0, f64::max);
        let r = grid(support, DENSE_GRID)
            .map(|t| phase(t, 1).abs())
            .fold(f64::INFINITY, f64::min);
        Ok(PhaseProblem {
            amplitude,
            phase,
            support,
            scales: Scales {
                x,
                v,
                v1: b - a,
                y,
                q,
                r,
            },
        })
    }

    /// As `measured`, with Q = sup|f'| / (3 inf|f''|) so that the curvature
    /// floor |f''| >= Y / (2 Q^2) holds.
    pub fn measured_stationary(amplitude: Jet, phase: Jet, support: (f64, f64)) -> Result<Self, OscError> {
        let m1 = sup_on_grid(&phase, 1, support, DENSE_GRID);
        let m2 = grid(support, DENSE_GRID)
            .map(|t| phase(t, 2).abs())
            .fold(f64::INFINITY, f64::min);
        let q = if m2 > 0.0 && m1 > 0.0 {
            m1 / (3.0 * m2)
        } else {
            support.1 - support.0
        };
        Self::measured(amplitude, phase, support, q)
    }

    /// lambda t^2 against a bump on [-half, half].
    pub fn fresnel(lambda: f64, half: f64) -> Result<Self, OscError> {
        Self::measured_stationary(
            bump_amplitude(0.0, half)?,
            polynomial_phase(0.0, vec![0.0, 0.0, lambda]),
            (-half, half),
        )
    }

    /// The same problem under t -> -t.
    pub fn reflected(&self) -> Self {
        let (amp, ph) = (self.amplitude.clone(), self.phase.clone());
        let sign = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
        PhaseProblem {
            amplitude: Arc::new(move |t, j| sign(j) * amp(-t, j)),
            phase: Arc::new(move |t, j| sign(j) * ph(-t, j)),
            support: (-self.support.1, -self.support.0),
            scales: self.scales,
        }
    }

    /// Declared amplitude bounds |h^(j)| <= 2 X V^{-j} (j <= 4) and phase bounds
    /// |f^(j)| <= 2 Y Q^{-j} for j in `phase_orders`, on the 50-point grid.
    pub fn check_bounds(&self, phase_orders: std::ops::RangeInclusive<usize>) -> Result<(), OscError> {
        let s = self.scales;
        for t in grid(self.support, BOUND_GRID) {
            for j in 0..=AMPLITUDE_ORDER {
                let bound = 2.0 * s.x * s.v.powi(-(j as i32));
                let value = (self.amplitude)(t, j).abs();
                if value > bound {
                    return Err(OscError::DeclaredBound {
                        which: "amplitude",
                        j,
                        t,
                        value,
                        bound,
                    });
                }
            }
            for j in phase_orders.clone() {
                let bound = 2.0 * s.y * s.q.powi(-(j as i32));
                let value = (self.phase)(t, j).abs();
                if value > bound {
                    return Err(OscError::DeclaredBound {
                        which: "phase",
                        j,
                        t,
                        value,
                        bound,
                    });
                }
            }
        }
        Ok(())
    }

    /// int h(t) exp(2 pi i s f(t)) dt by Gauss-Legendre panels no wider than a
    /// quarter of the local period.
    pub fn integrate(&self, s: f64) -> Complex64 {
        let (a, b) = self.support;
        let rule = GaussLegendre::cached(20);
        let cap = (self.scales.v / 2.0).min((b - a) / 8.0).max((b - a) * 1e-6);
        let width_at = |t: f64| {
            let d1 = (s * (self.phase)(t, 1)).abs();
            let d2 = (s * (self.phase)(t, 2)).abs();
            let by_freq = if d1 > 0.0 { 0.25 / d1 } else { f64::INFINITY };
            let by_curv = if d2 > 0.0 { 0.25 / d2.sqrt() } else { f64::INFINITY };
            cap.min(by_freq).min(by_curv)
        };
        let (mut re, mut im) = (Compensated::default(), Compensated::default());
        let mut t = a;
        while t < b {
            let guess = width_at(t);
            let w = guess.min(width_at((t + guess).min(b))).min(b - t);
            for (x, wt) in rule.mapped(t, t + w) {
                let h = (self.amplitude)(x, 0);
                if h != 0.0 {
                    let z = wt * h * e(s * (self.phase)(x, 0));
                    re.add(z.re);
                    im.add(z.im);
                }
            }
            t += w;
        }
        Complex64::new(re.value(), im.value())
    }
}

/// Both sides of sum_{n = a mod c} f(n) = (1/c) sum_n f^(n/c) e(an/c).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonSides {
    pub direct: f64,
    pub dual: f64,
    /// Dual frequencies n/c summed, |n| <= this.
    pub dual_terms: i64,
}

/// Relative size below which f at the window edge counts as negligible.
const NEGLIGIBLE: f64 = 1e-17;
/// Relative size below which a dual term counts as negligible; quadrature
/// noise in f^ sits near 1e-16.
const DUAL_NEGLIGIBLE: f64 = 1e-14;

/// f^(xi) = int f(x) e(-x xi) dx over `window`.
fn fourier_on(f: &dyn Fn(f64) -> f64, window: (f64, f64), xi: f64) -> Complex64 {
    let (lo, hi) = window;
    let panels = 64 + ((hi - lo) * xi.abs() * 2.0).ceil() as usize;
    crate::quad::gl_panels_complex(|x| f(x) * e(-x * xi), lo, hi, panels)
}

/// Evaluates both sides of Poisson summation restricted to n = a (mod c).
/// `window` must contain every point where f is not negligible.
pub fn poisson_on_class(f: &dyn Fn(f64) -> f64, window: (f64, f64), c: u64, a: i64) -> Result<PoissonSides, OscError> {
    if c == 0 {
        return Err(OscError::Modulus);
    }
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(OscError::Support(lo, hi));
    }
    let peak = (0..=1000)
        .map(|i| f(lo + (hi - lo) * i as f64 / 1000.0).abs())
        .fold(0.0, f64::max);
    if f(lo).abs() > NEGLIGIBLE * peak || f(hi).abs() > NEGLIGIBLE * peak {
        return Err(OscError::Range("f"));
    }
    let ci = c as i64;
    let first = lo.ceil() as i64;
    let start = first + (a - first).rem_euclid(ci);
    let direct: Compensated = (0..)
        .map(|m| start + m * ci)
        .take_while(|&n| (n as f64) <= hi)
        .map(|n| f(n as f64))
        .collect();
    let cf = c as f64;
    let mut dual = Compensated::default();
    let head = fourier_on(f, window, 0.0);
    dual.add(head.re);
    let scale = head.norm().max(peak * 1e-300);
    let mut quiet = 0usize;
    let mut n = 1i64;
    let max_terms = 1_000_000i64;
    while quiet < 2 * ci as usize + 4 {
        if n > max_terms {
            return Err(OscError::Range("the Fourier transform"));
        }
        let xi = n as f64 / cf;
        let plus = fourier_on(f, window, xi) * e((a * n) as f64 / cf);
        let minus = fourier_on(f, window, -xi) * e(-(a * n) as f64 / cf);
        let t = plus.re + minus.re;
        dual.add(t);
        if plus.norm().max(minus.norm()) < DUAL_NEGLIGIBLE * scale {
            quiet += 1;
        } else {
            quiet = 0;
        }
        n += 1;
    }
    Ok(PoissonSides {
        direct: direct.value(),
        dual: dual.value() / cf,
        dual_terms: n - 1,
    })
}

/// Direct integral against exp(i f(t)) and the first-derivative envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonstationaryReport {
    pub integral: Complex64,
    /// (beta - alpha) X [(QR / sqrt Y)^{-A} + (RU)^{-A}].
    pub envelope: f64,
}

/// int h(t) exp(i f(t)) dt with the decay envelope for exponent A.
pub fn nonstationary_bound_check(p: &PhaseProblem, big_a: u32) -> Result<NonstationaryReport, OscError> {
    let s = p.scales;
    for t in grid(p.support, 4 * BOUND_GRID) {
        let value = (p.phase)(t, 1).abs();
        if value < s.r {
            return Err(OscError::DerivativeFloor { t, value, floor: s.r });
        }
    }
    let a = -(big_a as i32);
    let envelope = (p.support.1 - p.support.0) * s.x * ((s.q * s.r / s.y.sqrt()).powi(a) + (s.r * s.v).powi(a));
    Ok(NonstationaryReport {
        integral: p.integrate(1.0 / (2.0 * PI)),
        envelope,
    })
}

/// Stationary-phase main term against direct quadrature of int h(t) e(f(t)) dt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryReport {
    pub t0: f64,
    pub main: Complex64,
    pub direct: Complex64,
    /// (Q^{3/2} X / Y^{3/2}) (V^{-2} + Y^{2/3} / Q^2).
    pub envelope: f64,
    /// X Q / sqrt(Y) + 1.
    pub trivial: f64,
}

/// Sign-change scan resolution for locating stationary points.
const SCAN_POINTS: usize = 400;

fn stationary_point(p: &PhaseProblem) -> Result<f64, OscError> {
    let (a, b) = p.support;
    let d = |t: f64| (p.phase)(t, 1);
    let pts: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| a + (b - a) * i as f64 / SCAN_POINTS as f64)
        .collect();
    let mut brackets = Vec::new();
    for w in pts.windows(2) {
        let (l, r) = (d(w[0]), d(w[1]));
        if l == 0.0 {
            brackets.push((w[0], w[0]));
        } else if l * r < 0.0 {
            brackets.push((w[0], w[1]));
        }
    }
    match brackets.len() {
        0 => Err(OscError::NoStationaryPoint),
        1 => {
            let (mut lo, mut hi) = brackets[0];
            let sign_lo = d(lo).signum();
            while hi - lo > 1e-12 * (1.0 + lo.abs()) {
                let mid = 0.5 * (lo + hi);
                if d(mid).signum() == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            let curv = (p.phase)(t, 2);
            Ok(if curv != 0.0 { t - d(t) / curv } else { t })
        }
        n => Err(OscError::MultipleStationaryPoints(n)),
    }
}

/// Checks Y >= Z^{3/20} and V1 >= V >= Q Z^{1/40} / sqrt Y with Z = Q + X + Y + V1 + 1.
pub fn stationary_hypotheses(s: &Scales) -> Result<(), OscError> {
    let z = s.q + s.x + s.y + s.v1 + 1.0;
    let checks = [
        ("Y >= Z^(3/20)", s.y, z.powf(0.15)),
        ("V1 >= V", s.v1, s.v),
        ("V >= Q Z^(1/40) / sqrt(Y)", s.v, s.q * z.powf(1.0 / 40.0) / s.y.sqrt()),
    ];
    for (name, lhs, rhs) in checks {
        if lhs < rhs {
            return Err(OscError::Hypothesis { name, lhs, rhs });
        }
    }
    Ok(())
}

/// Main term e^{sgn(f'') pi i / 4} e(f(t0)) h(t0) / sqrt|f''(t0)| with its envelope.
pub fn stationary_phase_eval(p: &PhaseProblem) -> Result<StationaryReport, OscError> {
    let s = p.scales;
    stationary_hypotheses(&s)?;
    p.check_bounds(1..=3)?;
    let t0 = stationary_point(p)?;
    for t in grid(p.support, BOUND_GRID) {
        let value = (p.phase)(t, 2).abs();
        let floor = s.y / (2.0 * s.q * s.q);
        if value < floor {
            return Err(OscError::Hypothesis {
                name: "|f''| >= Y / (2 Q^2)",
                lhs: value,
                rhs: floor,
            });
        }
    }
    let f2 = (p.phase)(t0, 2);
    let rot = Complex64::from_polar(1.0, f2.signum() * FRAC_PI_4);
    let main = rot * e((p.phase)(t0, 0)) * (p.amplitude)(t0, 0) / f2.abs().sqrt();
    let envelope = s.q.powf(1.5) * s.x / s.y.powf(1.5) * (s.v.powi(-2) + s.y.powf(2.0 / 3.0) / (s.q * s.q));
    Ok(StationaryReport {
        t0,
        main,
        direct: p.integrate(1.0),
        envelope,
        trivial: s.x * s.q / s.y.sqrt() + 1.0,
    })
}

/// Multiplicity vectors (k_1, ..., k_n) with sum j k_j = n, in lexicographic order.
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, part: usize, rest: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if part == 0 {
            if rest == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for k in 0..=rest / part {
            cur[part - 1] = k;
            go(n, part - 1, rest - k * part, cur, out);
        }
        cur[part - 1] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0; n];
    go(n, n, n, &mut cur, &mut out);
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// n-th derivative of p(q(t)) from p_derivs[m] = p^(m)(q(t)) and
/// q_derivs[j] = q^(j)(t); both need at least n + 1 entries.
pub fn faa_di_bruno(p_derivs: &[f64], q_derivs: &[f64], n: usize) -> f64 {
    assert!(
        p_derivs.len() > n && q_derivs.len() > n,
        "need derivatives up to order {n}"
    );
    if n == 0 {
        return p_derivs[0];
    }
    partitions(n)
        .iter()
        .map(|ks| {
            let m: usize = ks.iter().sum();
            let mut term = factorial(n) * p_derivs[m];
            for (j, &k) in ks.iter().enumerate() {
                if k > 0 {
                    let base = q_derivs[j + 1] / factorial(j + 1);
                    term *= base.powi(k as i32) / factorial(k);
                }
            }
            term
        })
        .collect::<Compensated>()
        .value()
}

/// A reproducible mixed suite: stationary problems (perturbed quadratic phase)
/// and non-stationary ones (linear plus small quadratic phase).
pub fn random_suite(seed: u64, cases: usize) -> Vec<(PhaseProblem, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .map(|i| {
            let half = rng.gen_range(6.0..10.0);
            let centre = rng.gen_range(-1.0..1.0);
            let support = (centre - half, centre + half);
            let amp = bump_amplitude(centre, half).expect("positive half-width");
            if i % 2 == 0 {
                let lambda = rng.gen_range(4.0..40.0);
                let t0 = centre + rng.gen_range(-0.3..0.3) * half;
                // |cubic| <= lambda / (12 half) keeps f'' within [lambda, 3 lambda]
                let cubic = lambda / (12.0 * half) * rng.gen_range(-1.0..1.0);
                let phase = polynomial_phase(t0, vec![rng.gen_range(-1.0..1.0), 0.0, lambda, cubic]);
                (
                    PhaseProblem::measured_stationary(amp, phase, support).expect("valid support"),
                    true,
                )
            } else {
                let slope = rng.gen_range(5.0..50.0);
                let quad = slope / (half * 8.0) * rng.gen_range(-1.0..1.0);
                let phase = polynomial_phase(centre, vec![0.0, slope, quad]);
                (
                    PhaseProblem::measured(amp, phase, support, half).expect("valid support"),
                    false,
                )
            }
        })
        .collect()
}
