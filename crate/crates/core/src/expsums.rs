//! Kloosterman sums, additive characters and small arithmetic functions.

use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

/// Largest modulus accepted by the brute-force fourth-moment identity.
pub const IDENTITY_MAX_MODULUS: u64 = 24;

/// Moduli above this are split into coprime factors before summation.
pub const CRT_THRESHOLD: u64 = 10_000;

/// Imaginary residue tolerated in an accumulated Kloosterman sum.
const IMAG_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpSumError {
    #[error("modulus must be positive")]
    ZeroModulus,
    #[error("modulus {c} exceeds the brute-force cap {cap}")]
    CostGuard { c: u64, cap: u64 },
}

/// Which arithmetic function [`arithmetic`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arithmetic {
    Phi,
    DivisorCount,
}

/// Prime factorisation by trial division, primes in increasing order.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    assert!(n >= 1, "factorize needs n >= 1");
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Euler's totient.
pub fn phi(n: u64) -> u64 {
    factorize(n).into_iter().map(|(p, e)| (p - 1) * p.pow(e - 1)).product()
}

/// Number of positive divisors d(n).
pub fn divisor_count(n: u64) -> u64 {
    factorize(n).into_iter().map(|(_, e)| e as u64 + 1).product()
}

pub fn gcd(a: u64, b: u64) -> u64 {
    num_integer::gcd(a, b)
}

pub fn arithmetic(kind: Arithmetic, n: u64) -> u64 {
    match kind {
        Arithmetic::Phi => phi(n),
        Arithmetic::DivisorCount => divisor_count(n),
    }
}

/// Inverse of `a` modulo `m` if it exists.
pub fn mod_inverse(a: i64, m: u64) -> Option<u64> {
    let m_i = m as i128;
    let (mut r0, mut r1) = (m_i, (a as i128).rem_euclid(m_i));
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return None;
    }
    Some(t0.rem_euclid(m_i) as u64)
}

/// e(x) = exp(2 pi i x).
pub fn e(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * x)
}

/// e_c(a) = exp(2 pi i a / c), with `a` reduced modulo `c` first.
pub fn e_c(a: i64, c: u64) -> Complex64 {
    let r = a.rem_euclid(c as i64) as f64;
    e(r / c as f64)
}

/// Precomputed unit-group inverses and roots of unity for one modulus.
#[derive(Debug, Clone)]
pub struct ModulusTable {
    modulus: u64,
    units: Vec<(u64, u64)>,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl ModulusTable {
    pub fn new(c: u64) -> Result<Self, ExpSumError> {
        if c == 0 {
            return Err(ExpSumError::ZeroModulus);
        }
        let units = (0..c)
            .filter_map(|x| mod_inverse(x as i64, c).map(|inv| (x, inv)))
            .collect();
        let (cos, sin) = (0..c)
            .map(|j| {
                let t = TAU * j as f64 / c as f64;
                (t.cos(), t.sin())
            })
            .unzip();
        Ok(Self {
            modulus: c,
            units,
            cos,
            sin,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// e_c(j) from the table.
    pub fn root(&self, j: i64) -> Complex64 {
        let r = j.rem_euclid(self.modulus as i64) as usize;
        Complex64::new(self.cos[r], self.sin[r])
    }

    /// S(a, b; c) by direct summation over units.
    pub fn kloosterman(&self, a: i64, b: i64) -> f64 {
        let c = self.modulus as i128;
        let a = (a as i128).rem_euclid(c);
        let b = (b as i128).rem_euclid(c);
        let mut re = crate::quad::Compensated::default();
        let mut im = crate::quad::Compensated::default();
        for &(x, inv) in &self.units {
            let j = ((a * x as i128 + b * inv as i128) % c) as usize;
            re.add(self.cos[j]);
            im.add(self.sin[j]);
        }
        let im = im.value();
        assert!(
            im.abs() < IMAG_TOLERANCE,
            "Kloosterman sum S({a},{b};{c}) has imaginary residue {im}"
        );
        re.value()
    }
}

/// A Kloosterman sum together with its arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KloostermanValue {
    pub a: i64,
    pub b: i64,
    pub c: u64,
    pub value: f64,
}

impl KloostermanValue {
    /// d(c) sqrt(c) sqrt(gcd(a, b, c)).
    pub fn weil_bound(&self) -> f64 {
        let g = gcd(gcd(self.a.unsigned_abs(), self.b.unsigned_abs()), self.c);
        divisor_count(self.c) as f64 * (self.c as f64).sqrt() * (g as f64).sqrt()
    }
}

/// S(a, b; c) by the defining sum, with no factor splitting.
pub fn kloosterman_direct(a: i64, b: i64, c: u64) -> Result<f64, ExpSumError> {
    Ok(ModulusTable::new(c)?.kloosterman(a, b))
}

/// S(a, b; c) = sum over x mod c, gcd(x, c) = 1, of e((a x + b x^{-1}) / c).
///
/// Moduli above [`CRT_THRESHOLD`] are split as c = c1 c2 with coprime factors.
pub fn kloosterman(a: i64, b: i64, c: u64) -> Result<f64, ExpSumError> {
    if c == 0 {
        return Err(ExpSumError::ZeroModulus);
    }
    if c <= CRT_THRESHOLD {
        return kloosterman_direct(a, b, c);
    }
    let f = factorize(c);
    if f.len() == 1 {
        return kloosterman_direct(a, b, c);
    }
    let (p, e) = f[f.len() - 1];
    let c1 = p.pow(e);
    let c2 = c / c1;
    kloosterman_split(a, b, c1, c2)
}

/// S(a, b; c1 c2) = S(a c2bar^2, b; c1) S(a c1bar^2, b; c2) for coprime c1, c2.
pub fn kloosterman_split(a: i64, b: i64, c1: u64, c2: u64) -> Result<f64, ExpSumError> {
    let inv2 = mod_inverse(c2 as i64, c1).expect("factors must be coprime") as i128;
    let inv1 = mod_inverse(c1 as i64, c2).expect("factors must be coprime") as i128;
    let a1 = ((a as i128).rem_euclid(c1 as i128) * (inv2 * inv2 % c1 as i128)) % c1 as i128;
    let a2 = ((a as i128).rem_euclid(c2 as i128) * (inv1 * inv1 % c2 as i128)) % c2 as i128;
    Ok(kloosterman(a1 as i64, b, c1)? * kloosterman(a2 as i64, b, c2)?)
}

/// Fourth-moment sum over a1, a2, b1, b2 mod c of
/// S(a1(a1+b1), a2(a2+b2); c) e_c(2 a1 a2 + a1 b2 + a2 b1).
///
/// Its value should be c^3 phi(c). Cost grows like c^5.
pub fn kloosterman_identity_lhs(c: u64) -> Result<f64, ExpSumError> {
    if c == 0 {
        return Err(ExpSumError::ZeroModulus);
    }
    if c > IDENTITY_MAX_MODULUS {
        return Err(ExpSumError::CostGuard {
            c,
            cap: IDENTITY_MAX_MODULUS,
        });
    }
    let table = ModulusTable::new(c)?;
    let ci = c as i64;
    // S depends only on the residues of the two products; tabulate them.
    let mut s = vec![0.0; (c * c) as usize];
    for u in 0..ci {
        for v in 0..ci {
            s[(u * ci + v) as usize] = table.kloosterman(u, v);
        }
    }
    let mut re = crate::quad::Compensated::default();
    let mut im = crate::quad::Compensated::default();
    for a1 in 0..ci {
        for a2 in 0..ci {
            for b1 in 0..ci {
                let u = (a1 * (a1 + b1)).rem_euclid(ci);
                for b2 in 0..ci {
                    let v = (a2 * (a2 + b2)).rem_euclid(ci);
                    let w = s[(u * ci + v) as usize];
                    let z = table.root(2 * a1 * a2 + a1 * b2 + a2 * b1) * w;
                    re.add(z.re);
                    im.add(z.im);
                }
            }
        }
    }
    Ok(re.value())
}

/// c^3 phi(c), the closed form of [`kloosterman_identity_lhs`].
pub fn kloosterman_identity_rhs(c: u64) -> f64 {
    (c as f64).powi(3) * phi(c) as f64
}
