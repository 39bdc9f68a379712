//! Real roots of a real-rooted integer polynomial as dyadic fixed-point values.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use std::cmp::Ordering;

/// Sign of p(x / 2^bits), via Horner on 2^{bits * deg} p(x / 2^bits).
fn sign_at(poly: &[BigInt], x: &BigInt, bits: u64) -> Ordering {
    let d = poly.len() - 1;
    let mut h = poly[d].clone();
    for i in (0..d).rev() {
        h = h * x + (&poly[i] << (bits * (d - i) as u64));
    }
    h.cmp(&BigInt::zero())
}

fn derivative(poly: &[BigInt]) -> Vec<BigInt> {
    poly.iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * BigInt::from(i))
        .collect()
}

/// Roots of a polynomial whose roots are all real and simple, in increasing
/// order, each as X with |root - X / 2^bits| <= 2^-bits.
///
/// Isolation uses the interlacing of roots of p and p'.
pub fn real_roots(poly: &[BigInt], bits: u64) -> Vec<BigInt> {
    let mut poly = poly.to_vec();
    while poly.len() > 1 && poly.last().is_some_and(Zero::is_zero) {
        poly.pop();
    }
    let d = poly.len() - 1;
    if d == 0 {
        return Vec::new();
    }
    let lead = poly[d].abs();
    let max = poly[..d].iter().map(Signed::abs).max().unwrap_or_default();
    let bound: BigInt = (BigInt::from(1) + (max + &lead - 1) / &lead) << bits;
    let mut ends = vec![-bound.clone()];
    ends.extend(real_roots(&derivative(&poly), bits));
    ends.push(bound);
    let mut roots = Vec::with_capacity(d);
    for w in ends.windows(2) {
        let (mut lo, mut hi) = (w[0].clone(), w[1].clone());
        let s_lo = sign_at(&poly, &lo, bits);
        let s_hi = sign_at(&poly, &hi, bits);
        if s_lo == Ordering::Equal {
            roots.push(lo);
            continue;
        }
        if s_hi == Ordering::Equal || s_lo == s_hi {
            // root sits on the right endpoint and is picked up by the next window
            continue;
        }
        while &hi - &lo > BigInt::from(1) {
            let mid: BigInt = (&lo + &hi) >> 1;
            match sign_at(&poly, &mid, bits) {
                Ordering::Equal => {
                    lo = mid.clone();
                    break;
                }
                s if s == s_lo => lo = mid,
                _ => hi = mid,
            }
        }
        roots.push(lo);
    }
    // A root exactly on the upper bound cannot occur; one on an interior
    // critical point would be a double root.
    roots
}
