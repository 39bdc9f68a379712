//! Exact q-expansions of level-one cusp forms, Hecke matrices, and the
//! normalised eigen-data used by every downstream module.

mod cache;
mod realroots;

pub use cache::{load_eigendata, save_eigendata, CacheError, CacheStatus, FORMS_VERSION};

use crate::analytic_kernels::ln_gamma_real;
use crate::quad::{gl_panels, Compensated};
use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormsError {
    #[error("weight {0} must be even and at least {1}")]
    Weight(u32, u32),
    #[error("truncation {have} too short; need at least {need}")]
    InsufficientTruncation { have: usize, need: usize },
    #[error("Hecke eigenvalues collide: lambda(2) values {0} and {1}")]
    EigenvalueCollision(f64, f64),
    #[error("smoothed L-series did not settle before X = {x} exceeded the eigen-data (need n <= {need}, have {have})")]
    NonConvergence { x: f64, need: usize, have: usize },
    #[error("{0}")]
    Cache(String),
}

/// Exact q-expansion sum_{n>=0} a(n) q^n truncated at q^N.
#[derive(Debug, Clone, PartialEq)]
pub struct QExpansion {
    pub weight: u32,
    /// `coeffs[n]` is a(n) for 0 <= n <= truncation.
    pub coeffs: Vec<BigInt>,
}

impl QExpansion {
    pub fn truncation(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, n: usize) -> &BigInt {
        &self.coeffs[n]
    }

    /// Product truncated to the shorter of the two expansions.
    pub fn mul(&self, other: &QExpansion) -> QExpansion {
        let n = self.truncation().min(other.truncation());
        QExpansion {
            weight: self.weight + other.weight,
            coeffs: series_mul(&self.coeffs[..=n], &other.coeffs[..=n]),
        }
    }

    pub fn scale(&self, c: &BigInt) -> QExpansion {
        QExpansion {
            weight: self.weight,
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }
}

fn series_mul(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    let n = a.len().min(b.len());
    let mut out = vec![BigInt::zero(); n];
    let a_start = a.iter().position(|x| !x.is_zero()).unwrap_or(n);
    let b_start = b.iter().position(|x| !x.is_zero()).unwrap_or(n);
    for i in a_start..n {
        if a[i].is_zero() {
            continue;
        }
        for j in b_start..(n - i) {
            if !b[j].is_zero() {
                out[i + j] += &a[i] * &b[j];
            }
        }
    }
    out
}

fn sigma(power: u32, n: u64) -> BigInt {
    let mut s = BigInt::zero();
    let mut d = 1u64;
    while d * d <= n {
        if n % d == 0 {
            s += BigInt::from(d).pow(power);
            let e = n / d;
            if e != d {
                s += BigInt::from(e).pow(power);
            }
        }
        d += 1;
    }
    s
}

/// Eisenstein series E_4 = 1 + 240 sum sigma_3(n) q^n.
pub fn eisenstein_e4(n: usize) -> QExpansion {
    eisenstein(4, 3, 240, n)
}

/// Eisenstein series E_6 = 1 - 504 sum sigma_5(n) q^n.
pub fn eisenstein_e6(n: usize) -> QExpansion {
    eisenstein(6, 5, -504, n)
}

fn eisenstein(weight: u32, power: u32, factor: i64, n: usize) -> QExpansion {
    let mut coeffs = Vec::with_capacity(n + 1);
    coeffs.push(BigInt::one());
    for m in 1..=n {
        coeffs.push(sigma(power, m as u64) * factor);
    }
    QExpansion { weight, coeffs }
}

/// Delta = q prod (1 - q^n)^24, through the logarithmic-derivative recurrence
/// m f_m = -24 sum_{j=1}^m sigma(j) f_{m-j} for the product.
pub fn delta(n: usize) -> QExpansion {
    let mut f = vec![BigInt::zero(); n];
    if n > 0 {
        f[0] = BigInt::one();
    }
    let sig: Vec<BigInt> = (0..n)
        .map(|j| if j == 0 { BigInt::zero() } else { sigma(1, j as u64) })
        .collect();
    for m in 1..n {
        let mut acc = BigInt::zero();
        for j in 1..=m {
            acc += &sig[j] * &f[m - j];
        }
        f[m] = -(acc * BigInt::from(24)) / BigInt::from(m);
    }
    let mut coeffs = vec![BigInt::zero(); n + 1];
    for (m, v) in f.into_iter().enumerate() {
        coeffs[m + 1] = v;
    }
    QExpansion { weight: 12, coeffs }
}

/// dim S_k for level one.
pub fn cusp_dimension(k: u32) -> usize {
    if k % 2 == 1 || k < 12 {
        return 0;
    }
    let base = (k / 12) as usize;
    if k % 12 == 2 {
        base - 1
    } else {
        base
    }
}

/// Echelonised integral basis of S_k built from E_4, E_6 and Delta.
///
/// The i-th returned expansion has a(j) = delta_{ij} for 1 <= j <= dim.
pub fn victor_miller_basis(k: u32, n: usize) -> Result<Vec<QExpansion>, FormsError> {
    if k % 2 == 1 || k < 4 {
        return Err(FormsError::Weight(k, 4));
    }
    let dim = cusp_dimension(k);
    if dim == 0 {
        return Ok(Vec::new());
    }
    if n < dim {
        return Err(FormsError::InsufficientTruncation { have: n, need: dim });
    }
    let rest = k - 12 * dim as u32;
    let e4 = eisenstein_e4(n);
    let e6 = eisenstein_e6(n);
    let tail = match rest {
        0 => QExpansion {
            weight: 0,
            coeffs: std::iter::once(BigInt::one())
                .chain(std::iter::repeat(BigInt::zero()).take(n))
                .collect(),
        },
        4 => e4.clone(),
        6 => e6.clone(),
        8 => e4.mul(&e4),
        10 => e4.mul(&e6),
        14 => e4.mul(&e4).mul(&e6),
        other => unreachable!("weight remainder {other}"),
    };
    let e6_sq = e6.mul(&e6);
    // low[i] = E_6^{2i} * tail
    let mut low = vec![tail];
    for i in 1..dim {
        let next = low[i - 1].mul(&e6_sq);
        low.push(next);
    }
    let d = delta(n);
    let mut basis = Vec::with_capacity(dim);
    let mut d_pow = d.clone();
    for j in 1..=dim {
        if j > 1 {
            d_pow = d_pow.mul(&d);
        }
        basis.push(d_pow.mul(&low[dim - j]));
    }
    // Leading coefficients are 1, so back-substitution stays integral.
    for j in (1..=dim).rev() {
        for i in 0..(j - 1) {
            let c = basis[i].coeffs[j].clone();
            if c.is_zero() {
                continue;
            }
            let (head, tail) = basis.split_at_mut(j - 1);
            for (a, b) in head[i].coeffs.iter_mut().zip(&tail[0].coeffs) {
                *a -= &c * b;
            }
        }
    }
    Ok(basis)
}

/// Integer matrix M with T_n b_i = sum_j M[i][j] b_j.
pub type HeckeMatrix = Vec<Vec<BigInt>>;

/// Coefficient m of T_n f, from a_{T_n f}(m) = sum_{d | (m, n)} d^{k-1} a(mn/d^2).
fn hecke_coefficient(f: &QExpansion, n: usize, m: usize) -> BigInt {
    let g = m.gcd(&n);
    let mut acc = BigInt::zero();
    for d in 1..=g {
        if g % d == 0 {
            acc += BigInt::from(d).pow(f.weight - 1) * &f.coeffs[m * n / (d * d)];
        }
    }
    acc
}

/// Matrix of T_n on an echelon basis.
pub fn hecke_matrix(basis: &[QExpansion], n: usize) -> Result<HeckeMatrix, FormsError> {
    let dim = basis.len();
    if dim == 0 {
        return Ok(Vec::new());
    }
    let need = n * dim + n;
    let have = basis.iter().map(QExpansion::truncation).min().unwrap_or(0);
    if have < need {
        return Err(FormsError::InsufficientTruncation { have, need });
    }
    Ok(basis
        .iter()
        .map(|b| (1..=dim).map(|j| hecke_coefficient(b, n, j)).collect())
        .collect())
}

/// T_n applied to a whole expansion, valid up to index truncation / n.
pub fn apply_hecke(f: &QExpansion, n: usize) -> QExpansion {
    let len = f.truncation() / n;
    let mut coeffs = vec![BigInt::zero(); len + 1];
    for (m, c) in coeffs.iter_mut().enumerate().skip(1) {
        *c = hecke_coefficient(f, n, m);
    }
    QExpansion {
        weight: f.weight,
        coeffs,
    }
}

pub fn matmul(a: &HeckeMatrix, b: &HeckeMatrix) -> HeckeMatrix {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).fold(BigInt::zero(), |acc, l| acc + &a[i][l] * &b[l][j]))
                .collect()
        })
        .collect()
}

/// log |x| for a nonzero big integer.
pub(crate) fn big_ln_abs(x: &BigInt) -> f64 {
    let bits = x.bits();
    let shift = bits.saturating_sub(64);
    let top = (x.abs() >> shift).to_f64().expect("shifted value fits f64");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// A normalised Hecke eigenform of level one.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenform {
    pub weight: u32,
    /// `lambda[n - 1]` is lambda_f(n) = a_f(n) / n^{(k-1)/2}.
    pub lambda: Vec<f64>,
    /// L(1, sym^2 f).
    pub l_sym2: f64,
    /// |a_f(1)|^2 for the L^2-normalised form, 2 pi^2 / (Gamma(k) L(1, sym^2 f)).
    pub a1_sq: f64,
    /// Position within the weight ordered by lambda_f(2) ascending.
    pub conjugacy_id: usize,
}

impl Eigenform {
    pub fn lambda(&self, n: usize) -> f64 {
        self.lambda[n - 1]
    }

    /// Number of stored eigenvalues.
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// ln |a_f(1)|^2.
    pub fn ln_a1_sq(&self) -> f64 {
        self.a1_sq.ln()
    }
}

/// Default eigen-data length max(2000, 8k).
pub fn default_truncation(k: u32) -> usize {
    2000usize.max(8 * k as usize)
}

/// Bits of fixed-point precision used to refine Hecke eigenvalues.
const ROOT_PRECISION_BITS: u64 = 1024;

/// Exact eigenvector data for one eigenform: the basis combination and the
/// coefficients a_f(n) up to a common integer scale.
#[derive(Debug, Clone)]
pub struct ExactEigenvector {
    /// Integer combination c with f proportional to sum_i c_i b_i.
    pub combination: Vec<BigInt>,
    /// Eigenvalue of T_2 as a dyadic approximation X / 2^bits.
    pub t2_numerator: BigInt,
    pub bits: u64,
}

/// Characteristic polynomial coefficients c_0..c_d (monic, c_d = 1) of an
/// integer matrix, by the Faddeev–LeVerrier recursion.
pub fn characteristic_polynomial(m: &HeckeMatrix) -> Vec<BigInt> {
    let d = m.len();
    let mut coeffs = vec![BigInt::zero(); d + 1];
    coeffs[d] = BigInt::one();
    let mut mk: HeckeMatrix = vec![vec![BigInt::zero(); d]; d];
    for k in 1..=d {
        // M_k = M * M_{k-1} + c_{d-k+1} I
        let mut next = matmul(m, &mk);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += &coeffs[d - k + 1];
        }
        mk = next;
        let am = matmul(m, &mk);
        let trace = (0..d).fold(BigInt::zero(), |acc, i| acc + &am[i][i]);
        coeffs[d - k] = -trace / BigInt::from(k);
    }
    coeffs
}

fn bareiss_det(mut a: Vec<Vec<BigInt>>) -> BigInt {
    let n = a.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            let Some(p) = (k + 1..n).find(|&r| !a[r][k].is_zero()) else {
                return BigInt::zero();
            };
            a.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                a[i][j] = v;
            }
        }
        prev = a[k][k].clone();
    }
    sign * &a[n - 1][n - 1]
}

/// Left eigenvectors of the T_2 matrix, one per real root of its
/// characteristic polynomial, in increasing eigenvalue order.
pub fn exact_eigenvectors(t2: &HeckeMatrix) -> Vec<ExactEigenvector> {
    let d = t2.len();
    if d == 1 {
        return vec![ExactEigenvector {
            combination: vec![BigInt::one()],
            t2_numerator: &t2[0][0] << ROOT_PRECISION_BITS,
            bits: ROOT_PRECISION_BITS,
        }];
    }
    let poly = characteristic_polynomial(t2);
    let roots = realroots::real_roots(&poly, ROOT_PRECISION_BITS);
    roots
        .into_iter()
        .map(|x| {
            // A = 2^P M^T - X I; eigenvector = a nonzero column of adj(A).
            let a: Vec<Vec<BigInt>> = (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| {
                            let mut v = &t2[j][i] << ROOT_PRECISION_BITS;
                            if i == j {
                                v -= &x;
                            }
                            v
                        })
                        .collect()
                })
                .collect();
            let mut best: Option<Vec<BigInt>> = None;
            for col in 0..d {
                // adj(A)[i][col] = (-1)^{i+col} det(A without row col, column i)
                let v: Vec<BigInt> = (0..d)
                    .map(|i| {
                        let minor: Vec<Vec<BigInt>> = (0..d)
                            .filter(|&r| r != col)
                            .map(|r| (0..d).filter(|&c| c != i).map(|c| a[r][c].clone()).collect())
                            .collect();
                        let det = bareiss_det(minor);
                        if (i + col) % 2 == 0 {
                            det
                        } else {
                            -det
                        }
                    })
                    .collect();
                let size = v.iter().map(|z| z.bits()).max().unwrap_or(0);
                let better = match &best {
                    None => true,
                    Some(b) => size > b.iter().map(|z| z.bits()).max().unwrap_or(0),
                };
                if better {
                    best = Some(v);
                }
                if !v_is_degenerate(best.as_ref()) {
                    break;
                }
            }
            ExactEigenvector {
                combination: best.expect("matrix has at least one column"),
                t2_numerator: x,
                bits: ROOT_PRECISION_BITS,
            }
        })
        .collect()
}

fn v_is_degenerate(v: Option<&Vec<BigInt>>) -> bool {
    match v {
        None => true,
        Some(v) => v.first().map_or(true, |c| c.is_zero()),
    }
}

/// Combination coefficients A_n = sum_i c_i b_i(n) for n = 1..=N.
fn combined_coefficients(basis: &[QExpansion], c: &[BigInt]) -> Vec<BigInt> {
    let n = basis.iter().map(QExpansion::truncation).min().unwrap_or(0);
    (1..=n)
        .map(|m| {
            basis
                .iter()
                .zip(c)
                .fold(BigInt::zero(), |acc, (b, ci)| acc + &b.coeffs[m] * ci)
        })
        .collect()
}

/// Normalised eigenvalues lambda(n) from unnormalised integer coefficients.
fn normalise(weight: u32, coeffs: &[BigInt]) -> Vec<f64> {
    let a1 = &coeffs[0];
    let ln_a1 = big_ln_abs(a1);
    let half = (weight as f64 - 1.0) / 2.0;
    coeffs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if a.is_zero() {
                return 0.0;
            }
            let n = (i + 1) as f64;
            let sign = if (a.sign() == Sign::Minus) == (a1.sign() == Sign::Minus) {
                1.0
            } else {
                -1.0
            };
            sign * (big_ln_abs(a) - ln_a1 - half * n.ln()).exp()
        })
        .collect()
}

/// Eigen-data for one weight: normalised eigenvalues plus exact combinations.
#[derive(Debug, Clone)]
pub struct WeightData {
    pub weight: u32,
    pub forms: Vec<Eigenform>,
    pub vectors: Vec<ExactEigenvector>,
    pub t2: HeckeMatrix,
    pub basis: Vec<QExpansion>,
}

impl WeightData {
    /// Sup-norm relative residual of M_n^T c = a_f(n) c for the form at `index`,
    /// with M_n the exact T_n matrix and c the refined eigenvector.
    pub fn round_trip_error(&self, index: usize, n: usize) -> Result<f64, FormsError> {
        let m = hecke_matrix(&self.basis, n)?;
        let c = &self.vectors[index].combination;
        let a_n = combined_coefficients(&self.basis, c)[n - 1].clone();
        let a_1 = &c[0];
        let d = c.len();
        let mut worst = f64::NEG_INFINITY;
        let mut scale = f64::NEG_INFINITY;
        for j in 0..d {
            let lhs = (0..d).fold(BigInt::zero(), |acc, i| acc + &m[i][j] * &c[i]) * a_1;
            let rhs = &a_n * &c[j];
            let diff = lhs - &rhs;
            if !diff.is_zero() {
                worst = worst.max(big_ln_abs(&diff));
            }
            if !rhs.is_zero() {
                scale = scale.max(big_ln_abs(&rhs));
            }
        }
        Ok((worst - scale).exp())
    }
}

/// Hecke eigenforms of weight k with eigen-data up to N, ordered by lambda(2).
pub fn eigenforms(k: u32, n: usize) -> Result<Vec<Eigenform>, FormsError> {
    Ok(weight_data(k, n)?.forms)
}

/// As [`eigenforms`] but keeping the exact eigenvectors and the T_2 matrix.
pub fn weight_data(k: u32, n: usize) -> Result<WeightData, FormsError> {
    if k % 2 == 1 || k < 12 {
        return Err(FormsError::Weight(k, 12));
    }
    let dim = cusp_dimension(k);
    let need = (2 * dim + 2).max(significant_terms(k, 3f64.sqrt() / 2.0));
    if n < need {
        return Err(FormsError::InsufficientTruncation { have: n, need });
    }
    let basis = victor_miller_basis(k, n)?;
    if basis.is_empty() {
        return Ok(WeightData {
            weight: k,
            forms: Vec::new(),
            vectors: Vec::new(),
            t2: Vec::new(),
            basis,
        });
    }
    let t2 = hecke_matrix(&basis, 2)?;
    let vectors = exact_eigenvectors(&t2);
    let mut forms = Vec::with_capacity(vectors.len());
    for (id, v) in vectors.iter().enumerate() {
        let coeffs = combined_coefficients(&basis, &v.combination);
        let lambda = normalise(k, &coeffs);
        let l_sym2 = l_sym2_from_norm(k, &lambda);
        let a1_sq = a1_sq_from_l(k, l_sym2);
        forms.push(Eigenform {
            weight: k,
            lambda,
            l_sym2,
            a1_sq,
            conjugacy_id: id,
        });
    }
    for w in forms.windows(2) {
        let (a, b) = (w[0].lambda(2), w[1].lambda(2));
        if (a - b).abs() < 1e-8 {
            return Err(FormsError::EigenvalueCollision(a, b));
        }
    }
    Ok(WeightData {
        weight: k,
        forms,
        vectors,
        t2,
        basis,
    })
}

/// 2 pi^2 / (Gamma(k) L(1, sym^2 f)).
pub fn a1_sq_from_l(k: u32, l_sym2: f64) -> f64 {
    ((2.0 * PI * PI / l_sym2).ln() - ln_gamma_real(k as f64)).exp()
}

/// Fourier terms of f / a_f(1) that matter for y >= y_min: n with
/// ((k-1)/2) log(4 pi n) - 2 pi n y_min above the peak minus 50.
pub fn significant_terms(k: u32, y_min: f64) -> usize {
    let half = (k as f64 - 1.0) / 2.0;
    let log_term = |n: f64| half * (4.0 * PI * n).ln() - 2.0 * PI * n * y_min;
    let peak_n = (half / (2.0 * PI * y_min)).max(1.0);
    let peak = log_term(peak_n);
    let mut n = peak_n.ceil() as usize;
    while log_term(n as f64) > peak - 50.0 {
        n += 1;
    }
    n
}

/// |f(x + iy)|^2 y^k / Gamma(k-1) for f = sum lambda(n) (4 pi n)^{(k-1)/2} e(nz),
/// summed over the first `terms` coefficients.
pub fn norm_density(k: u32, lambda: &[f64], terms: usize, x: f64, y: f64) -> f64 {
    let kf = k as f64;
    let half = (kf - 1.0) / 2.0;
    let base = (kf * y.ln() - ln_gamma_real(kf - 1.0)) / 2.0;
    let (mut re, mut im) = (Compensated::default(), Compensated::default());
    for n in 1..=terms.min(lambda.len()) {
        let nf = n as f64;
        let mag = lambda[n - 1] * (half * (4.0 * PI * nf).ln() - 2.0 * PI * nf * y + base).exp();
        let arg = 2.0 * PI * nf * x;
        re.add(mag * arg.cos());
        im.add(mag * arg.sin());
    }
    let (r, i) = (re.value(), im.value());
    r * r + i * i
}

/// <f, f> / Gamma(k-1) for f = sum lambda(n) (4 pi n)^{(k-1)/2} e(nz), split
/// as the y >= 1 strip (closed form through incomplete Gamma values) plus the
/// region between the unit circle and y = 1.
fn normalised_norm(k: u32, lambda: &[f64], x_panels: usize, y_panels: usize) -> f64 {
    let kf = k as f64;
    let terms = significant_terms(k, 3f64.sqrt() / 2.0).min(lambda.len());
    // strip y >= 1: sum lambda(n)^2 Q(k-1, 4 pi n)
    let strip: f64 = (1..=terms.min(lambda.len()))
        .map(|n| {
            let q = statrs::function::gamma::gamma_ur(kf - 1.0, 4.0 * PI * n as f64);
            lambda[n - 1] * lambda[n - 1] * q
        })
        .collect::<Compensated>()
        .value();
    // region between the unit circle and y = 1, measure dx dy / y^2
    let lower = gl_panels(
        |x| {
            let y0 = (1.0 - x * x).sqrt();
            gl_panels(|y| norm_density(k, lambda, terms, x, y) / (y * y), y0, 1.0, y_panels)
        },
        -0.5,
        0.5,
        x_panels,
    );
    strip + lower
}

/// <f, f> with f = sum lambda(n) (4 pi n)^{(k-1)/2} e(nz) over the standard
/// fundamental domain with measure dx dy / y^2, returned as its logarithm.
pub fn ln_petersson_norm(k: u32, lambda: &[f64]) -> f64 {
    let s = normalised_norm(k, lambda, 16, 6);
    s.ln() + ln_gamma_real(k as f64 - 1.0)
}

/// L(1, sym^2 f) from the Petersson norm: 2 pi^2 <f, f> / Gamma(k).
fn l_sym2_from_norm(k: u32, lambda: &[f64]) -> f64 {
    let s = normalised_norm(k, lambda, 16, 6);
    2.0 * PI * PI * s / (k as f64 - 1.0)
}

/// Petersson norm of an exact expansion, by quadrature over the fundamental
/// domain. Used as an independent check of |a_f(1)|^2.
pub fn petersson_norm(f_exact: &QExpansion, x_panels: usize, y_panels: usize) -> Result<f64, FormsError> {
    let k = f_exact.weight;
    let need = significant_terms(k, 3f64.sqrt() / 2.0);
    if f_exact.truncation() < need {
        return Err(FormsError::InsufficientTruncation {
            have: f_exact.truncation(),
            need,
        });
    }
    let half = (k as f64 - 1.0) / 2.0;
    // Convert a(n) to the lambda-style normalisation, keeping a(1) scale apart.
    let scale_ln = (1..=need)
        .filter(|&n| !f_exact.coeffs[n].is_zero())
        .map(|n| big_ln_abs(&f_exact.coeffs[n]) - half * (n as f64).ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let lambda: Vec<f64> = (1..=need)
        .map(|n| {
            let a = &f_exact.coeffs[n];
            if a.is_zero() {
                0.0
            } else {
                let s = if a.is_negative() { -1.0 } else { 1.0 };
                s * (big_ln_abs(a) - half * (n as f64).ln() - scale_ln).exp()
            }
        })
        .collect();
    let s = normalised_norm(k, &lambda, x_panels, y_panels);
    // f = e^{scale_ln} sum lambda(n) n^{(k-1)/2} q^n = e^{scale_ln} (4 pi)^{-(k-1)/2} g
    let ln = s.ln() + ln_gamma_real(k as f64 - 1.0) + 2.0 * scale_ln - (k as f64 - 1.0) * (4.0 * PI).ln();
    Ok(ln.exp())
}

/// lambda(p^e) for all prime powers from lambda(p) by the Hecke recursion,
/// then lambda(n^2) multiplicatively. Returns lambda(n^2) for n <= m.
fn lambda_of_squares(f: &Eigenform, m: usize) -> Option<Vec<f64>> {
    let mut out = vec![1.0; m + 1];
    out[0] = 0.0;
    for n in 2..=m {
        let mut rest = n;
        let mut value = 1.0;
        for (p, e) in crate::expsums::factorize(n as u64) {
            let p = p as usize;
            if p > f.len() {
                return None;
            }
            let lp = f.lambda(p);
            // lambda(p^{j+1}) = lambda(p) lambda(p^j) - lambda(p^{j-1})
            let (mut prev, mut cur) = (1.0, lp);
            for _ in 1..(2 * e) {
                let next = lp * cur - prev;
                prev = cur;
                cur = next;
            }
            value *= cur;
            rest /= p.pow(e);
        }
        debug_assert_eq!(rest, 1);
        out[n] = value;
    }
    Some(out)
}

/// zeta(2) sum_n lambda(n^2) n^{-1} e^{-n/X} at a single X, summed to n = 40 X.
pub fn l_sym2_smoothed(f: &Eigenform, x: f64) -> Result<f64, FormsError> {
    let cutoff = (40.0 * x).ceil() as usize;
    let sq = lambda_of_squares(f, cutoff).ok_or(FormsError::NonConvergence {
        x,
        need: cutoff,
        have: f.len(),
    })?;
    let s: Compensated = (1..=cutoff)
        .map(|n| sq[n] / n as f64 * (-(n as f64) / x).exp())
        .collect();
    Ok(PI * PI / 6.0 * s.value())
}

/// zeta(2) sum_n lambda(n^2) n^{-1} e^{-n/X}, with X doubled from 256 until two
/// successive values agree to `tol` relative.
///
/// Returns the value and the final X. lambda(n^2) is built from lambda(p)
/// through the Hecke relations, so primes up to the cut-off must be stored.
pub fn l_sym2_at_1(f: &Eigenform, tol: f64) -> Result<(f64, f64), FormsError> {
    let mut x: f64 = 256.0;
    let mut prev: Option<f64> = None;
    loop {
        let v = l_sym2_smoothed(f, x)?;
        if let Some(p) = prev {
            if ((v - p) / v).abs() < tol {
                return Ok((v, x));
            }
        }
        prev = Some(v);
        x *= 2.0;
    }
}

/// Eigenforms of weight k, read from `dir` when a valid cache file exists and
/// written there otherwise.
pub fn eigenforms_cached(
    k: u32,
    n: usize,
    dir: Option<&std::path::Path>,
) -> Result<(Vec<Eigenform>, CacheStatus), FormsError> {
    let Some(dir) = dir else {
        return Ok((eigenforms(k, n)?, CacheStatus::Missing));
    };
    let (found, status) = load_eigendata(dir, k, n).map_err(|e| FormsError::Cache(e.to_string()))?;
    if let Some(forms) = found {
        return Ok((forms, status));
    }
    let forms = eigenforms(k, n)?;
    save_eigendata(dir, k, n, &forms).map_err(|e| FormsError::Cache(e.to_string()))?;
    Ok((forms, status))
}


/// Eigen-data for a set of weights, built in parallel and optionally cached.
#[derive(Debug, Clone, Default)]
pub struct EigenStore {
    truncation: usize,
    data: std::collections::BTreeMap<u32, Vec<Eigenform>>,
    statuses: std::collections::BTreeMap<u32, CacheStatus>,
}

impl EigenStore {
    /// Builds (or loads) every listed weight with truncation `n`.
    pub fn build(weights: &[u32], n: usize, cache_dir: Option<&std::path::Path>) -> Result<Self, FormsError> {
        use rayon::prelude::*;
        let mut ws: Vec<u32> = weights.to_vec();
        ws.sort_unstable();
        ws.dedup();
        let built: Vec<(u32, Vec<Eigenform>, CacheStatus)> = ws
            .par_iter()
            .map(|&k| eigenforms_cached(k, n, cache_dir).map(|(f, s)| (k, f, s)))
            .collect::<Result<_, _>>()?;
        let mut store = EigenStore {
            truncation: n,
            ..Default::default()
        };
        for (k, f, s) in built {
            store.data.insert(k, f);
            store.statuses.insert(k, s);
        }
        Ok(store)
    }

    /// Reads whichever listed weights have a valid cache file; nothing is computed.
    pub fn load(weights: &[u32], n: usize, cache_dir: &std::path::Path) -> Result<Self, FormsError> {
        let mut store = EigenStore {
            truncation: n,
            ..Default::default()
        };
        for &k in weights {
            let (found, status) = load_eigendata(cache_dir, k, n).map_err(|e| FormsError::Cache(e.to_string()))?;
            if let Some(forms) = found {
                store.data.insert(k, forms);
            }
            store.statuses.insert(k, status);
        }
        Ok(store)
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn get(&self, k: u32) -> Option<&[Eigenform]> {
        self.data.get(&k).map(Vec::as_slice)
    }

    pub fn weights(&self) -> impl Iterator<Item = u32> + '_ {
        self.data.keys().copied()
    }

    /// Cache outcome per weight, in weight order.
    pub fn statuses(&self) -> impl Iterator<Item = (u32, CacheStatus)> + '_ {
        self.statuses.iter().map(|(k, s)| (*k, *s))
    }

    /// Weights from `wanted` that are not present.
    pub fn missing(&self, wanted: impl IntoIterator<Item = u32>) -> Vec<u32> {
        wanted.into_iter().filter(|k| !self.data.contains_key(k)).collect()
    }
}
