//! Complex Gamma and zeta, the Euler–Mascheroni constant, and J-Bessel
//! functions of large integer order evaluated with an explicit log scale.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

/// Euler–Mascheroni constant to 20 digits.
pub const EULER_GAMMA: f64 = 0.57721566490153286061;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// B_2, B_4, ..., B_20.
const BERNOULLI_EVEN: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("pole of {function} at {re}+{im}i")]
    Pole { function: &'static str, re: f64, im: f64 },
    #[error("{0} overflows f64; use the logarithmic form")]
    Overflow(&'static str),
    #[error("non-finite argument {re}+{im}i")]
    NonFinite { re: f64, im: f64 },
    #[error("domain violation: {0}")]
    Domain(String),
}

fn check_finite(s: Complex64) -> Result<(), KernelError> {
    if s.re.is_finite() && s.im.is_finite() {
        Ok(())
    } else {
        Err(KernelError::NonFinite { re: s.re, im: s.im })
    }
}

fn is_nonpositive_integer(s: Complex64) -> bool {
    s.im == 0.0 && s.re <= 0.0 && s.re == s.re.round()
}

/// Stirling series for log Gamma, accurate once Re z >= 20.
fn ln_gamma_stirling(z: Complex64) -> Complex64 {
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut corr = Complex64::new(0.0, 0.0);
    let mut pow = inv;
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        let two_j = 2.0 * (j as f64 + 1.0);
        corr += pow * (b / (two_j * (two_j - 1.0)));
        pow *= inv2;
    }
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + corr
}

/// log sin(pi z), with the argument reduced to |Re| <= 1/2 first.
fn ln_sin_pi(z: Complex64) -> Complex64 {
    let n = z.re.round();
    let r = Complex64::new(z.re - n, z.im);
    let parity = if (n as i64).rem_euclid(2) == 1 {
        Complex64::new(0.0, PI)
    } else {
        Complex64::new(0.0, 0.0)
    };
    let body = if r.im.abs() > 5.0 {
        // sin(pi r) = e^{-i pi r}(e^{2 i pi r} - 1)/(2i) for Im r > 0; mirror otherwise.
        let (w, flip) = if r.im > 0.0 { (r, false) } else { (r.conj(), true) };
        let i = Complex64::i();
        let small = (i * 2.0 * PI * w).exp();
        let v = -i * PI * w + ((small - 1.0) / (2.0 * i)).ln();
        if flip {
            v.conj()
        } else {
            v
        }
    } else {
        (r * PI).sin().ln()
    };
    body + parity
}

/// Principal-continuous log Gamma. `exp` of the result is Gamma(s).
pub fn ln_gamma(s: Complex64) -> Result<Complex64, KernelError> {
    check_finite(s)?;
    if is_nonpositive_integer(s) {
        return Err(KernelError::Pole {
            function: "gamma",
            re: s.re,
            im: s.im,
        });
    }
    if s.re < 0.5 {
        let refl = ln_gamma(Complex64::new(1.0, 0.0) - s)?;
        return Ok(Complex64::new(PI.ln(), 0.0) - ln_sin_pi(s) - refl);
    }
    let mut z = s;
    let mut shift = Complex64::new(0.0, 0.0);
    while z.re < 20.0 {
        shift += z.ln();
        z += 1.0;
    }
    Ok(ln_gamma_stirling(z) - shift)
}

/// log Gamma on the positive real axis.
pub fn ln_gamma_real(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma_real needs a positive argument, got {x}");
    ln_gamma(Complex64::new(x, 0.0))
        .expect("positive reals are not poles")
        .re
}

/// Complex Gamma function.
pub fn gamma(s: Complex64) -> Result<Complex64, KernelError> {
    let lg = ln_gamma(s)?;
    if lg.re > 709.0 {
        return Err(KernelError::Overflow("gamma"));
    }
    Ok(lg.exp())
}

fn euler_maclaurin_terms(im: f64) -> usize {
    20usize.max((2.0 * im.abs()).ceil() as usize)
}

/// k^{-s}, with the integer part of the real exponent taken by `powi` to keep
/// large magnitudes correctly rounded.
fn int_pow_neg(k: usize, s: Complex64) -> Complex64 {
    let kf = k as f64;
    let ln_k = kf.ln();
    let whole = s.re.floor();
    let magnitude = if whole.abs() < 64.0 {
        kf.powi(-(whole as i32)) * (-(s.re - whole) * ln_k).exp()
    } else {
        (-s.re * ln_k).exp()
    };
    let phase = -s.im * ln_k;
    Complex64::from_polar(magnitude, phase)
}

/// Riemann zeta by Euler–Maclaurin summation, without any reflection.
pub fn zeta_euler_maclaurin(s: Complex64) -> Result<Complex64, KernelError> {
    check_finite(s)?;
    if s == Complex64::new(1.0, 0.0) {
        return Err(KernelError::Pole {
            function: "zeta",
            re: 1.0,
            im: 0.0,
        });
    }
    let n = euler_maclaurin_terms(s.im);
    let mut re = crate::quad::Compensated::default();
    let mut im = crate::quad::Compensated::default();
    for k in 1..n {
        let t = int_pow_neg(k, s);
        re.add(t.re);
        im.add(t.im);
    }
    let nf = n as f64;
    let n_pow = int_pow_neg(n, s);
    let mut tail = n_pow * nf / (s - 1.0) + n_pow * 0.5;
    // Bernoulli corrections: B_{2j}/(2j)! * s(s+1)...(s+2j-2) * N^{-s-2j+1}.
    let mut rising = s;
    let mut npow = n_pow / nf;
    let mut fact = 2.0;
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        tail += rising * npow * (b / fact);
        let a = 2.0 * j as f64 + 1.0;
        rising *= (s + a) * (s + a + 1.0);
        npow /= nf * nf;
        fact *= (a + 2.0) * (a + 3.0);
    }
    Ok(Complex64::new(re.value(), im.value()) + tail)
}

/// chi(s) = 2^s pi^{s-1} sin(pi s / 2) Gamma(1 - s), so that zeta(s) = chi(s) zeta(1 - s).
fn functional_factor(s: Complex64) -> Result<Complex64, KernelError> {
    let one = Complex64::new(1.0, 0.0);
    let log_factor = s * 2f64.ln() + (s - 1.0) * PI.ln() + ln_sin_pi(s * 0.5) + ln_gamma(one - s)?;
    Ok(log_factor.exp())
}

fn zeta_trivial_cases(s: Complex64) -> Option<Result<Complex64, KernelError>> {
    if s == Complex64::new(1.0, 0.0) {
        return Some(Err(KernelError::Pole {
            function: "zeta",
            re: 1.0,
            im: 0.0,
        }));
    }
    if s == Complex64::new(0.0, 0.0) {
        return Some(Ok(Complex64::new(-0.5, 0.0)));
    }
    if is_nonpositive_integer(s) && (s.re as i64) % 2 == 0 {
        return Some(Ok(Complex64::new(0.0, 0.0)));
    }
    None
}

/// zeta(s) evaluated as chi(s) zeta(1 - s).
pub fn zeta_reflected(s: Complex64) -> Result<Complex64, KernelError> {
    check_finite(s)?;
    if let Some(v) = zeta_trivial_cases(s) {
        return v;
    }
    Ok(functional_factor(s)? * zeta(Complex64::new(1.0, 0.0) - s)?)
}

/// Riemann zeta. Euler–Maclaurin for Re s >= 0; for Re s < 0 the direct sum
/// cancels badly, so the functional equation maps the point to Re s > 1.
pub fn zeta(s: Complex64) -> Result<Complex64, KernelError> {
    check_finite(s)?;
    if s.re >= 0.0 {
        return zeta_euler_maclaurin(s);
    }
    if let Some(v) = zeta_trivial_cases(s) {
        return v;
    }
    Ok(functional_factor(s)? * zeta_euler_maclaurin(Complex64::new(1.0, 0.0) - s)?)
}

/// A real number stored as `mantissa * exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub mantissa: f64,
    pub log_scale: f64,
}

impl Scaled {
    pub fn zero() -> Self {
        Scaled {
            mantissa: 0.0,
            log_scale: 0.0,
        }
    }

    /// Plain f64 value; underflows to 0 or overflows to infinity as needed.
    pub fn value(&self) -> f64 {
        self.mantissa * self.log_scale.exp()
    }

    /// log |value|.
    pub fn ln_abs(&self) -> f64 {
        self.mantissa.abs().ln() + self.log_scale
    }
}

/// J_order(x) for integer order <= 2000 and x > 0, as a scaled real.
///
/// Uses the power series in log space while its alternating terms cannot
/// cancel badly, and Miller's normalised backward recurrence otherwise.
pub fn bessel_j_scaled(order: u32, x: f64) -> Result<Scaled, KernelError> {
    if order > 2000 {
        return Err(KernelError::Domain(format!("order {order} exceeds 2000")));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(KernelError::Domain(format!("argument {x} must be positive")));
    }
    let n = order as f64;
    if x * x <= 10.0 * (n + 1.0) {
        Ok(bessel_series(order, x))
    } else {
        Ok(bessel_miller(order, x))
    }
}

/// Power series sum_k (-1)^k (x/2)^{2k+n} / (k! (n+k)!), leading factor in log space.
fn bessel_series(order: u32, x: f64) -> Scaled {
    let n = order as f64;
    let half = 0.5 * x;
    let log_lead = n * half.ln() - ln_gamma_real(n + 1.0);
    let q = -half * half;
    let mut term = 1.0;
    let mut acc = crate::quad::Compensated::default();
    acc.add(1.0);
    for k in 1..500 {
        let kf = k as f64;
        term *= q / (kf * (n + kf));
        acc.add(term);
        if term.abs() < 1e-18 * acc.value().abs() {
            break;
        }
    }
    let s = acc.value();
    Scaled {
        mantissa: s,
        log_scale: log_lead,
    }
}

/// Miller backward recurrence normalised by J_0 + 2 sum J_{2k} = 1.
fn bessel_miller(order: u32, x: f64) -> Scaled {
    let n = order as usize;
    let top = (n as f64).max(x);
    let mut start = (top + 30.0 + 6.0 * top.sqrt()).ceil() as usize;
    if start % 2 == 1 {
        start += 1;
    }
    const BIG: f64 = 1e200;
    let mut f_next = 0.0; // f_{k+1}
    let mut f_cur = 1e-300; // f_k
    let mut norm = crate::quad::Compensated::default();
    // log of the factor by which the recorded f_n must be multiplied to
    // land in the final scale.
    let mut recorded: Option<f64> = None;
    let mut rescale_after_record = 0.0;
    for k in (1..=start).rev() {
        if k == n {
            recorded = Some(f_cur);
        }
        if k % 2 == 0 {
            norm.add(2.0 * f_cur);
        }
        let f_prev = (2.0 * k as f64 / x) * f_cur - f_next;
        f_next = f_cur;
        f_cur = f_prev;
        if f_cur.abs() > BIG {
            f_cur /= BIG;
            f_next /= BIG;
            let s = norm.value() / BIG;
            norm = crate::quad::Compensated::default();
            norm.add(s);
            if recorded.is_some() {
                rescale_after_record -= BIG.ln();
            }
        }
    }
    // f_cur now holds f_0.
    if n == 0 {
        recorded = Some(f_cur);
    }
    norm.add(f_cur);
    let total = norm.value();
    let fnv = recorded.unwrap_or(0.0);
    Scaled {
        mantissa: fnv / total,
        log_scale: rescale_after_record,
    }
}
