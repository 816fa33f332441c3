//! Test-only oracles and fixture builders.
//!
//! Everything here is reference machinery for the test suites: the
//! matrix-exponential Taylor oracle evaluated in 320-bit fixed-point
//! arithmetic, and seeded random-matrix builders. None of it shares
//! code with the estimation paths it is used to check, on purpose:
//! the oracle sums the plain power series with big-integer arithmetic,
//! no scaling, no squaring, no rational approximation.

use num_bigint::BigInt;
use num_traits::{Float, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Binary digits kept to the right of the point in fixed-point values.
const SCALE_BITS: u32 = 320;

/// Exact embedding of an f64 into the fixed-point grid. Every finite
/// f64 with exponent >= -320 is a dyadic rational and converts without
/// rounding; smaller magnitudes floor to the grid.
fn to_fixed(x: f64) -> BigInt {
    assert!(x.is_finite(), "fixed-point oracle needs finite input, got {x}");
    let (mantissa, exponent, sign) = Float::integer_decode(x);
    let mut v = BigInt::from(mantissa);
    let shift = exponent as i64 + SCALE_BITS as i64;
    if shift >= 0 {
        v <<= shift as u64;
    } else {
        v >>= (-shift) as u64;
    }
    if sign < 0 {
        -v
    } else {
        v
    }
}

fn from_fixed(v: &BigInt) -> f64 {
    v.to_f64().expect("fixed-point value in f64 range") * (2f64).powi(-(SCALE_BITS as i32))
}

/// Fixed-point matrix product `a * b`, both row-major `n x n`.
fn matmul_fixed(a: &[BigInt], b: &[BigInt], n: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = BigInt::zero();
            for k in 0..n {
                acc += &a[i * n + k] * &b[k * n + j];
            }
            out[i * n + j] = acc >> SCALE_BITS;
        }
    }
    out
}

/// Truncated power-series matrix exponential, evaluated in fixed point.
///
/// Sums `I + A + A^2/2! + ... + A^m/m!` with `m = max_terms`, stopping
/// early once a term vanishes at working precision (after which all
/// further terms are identically zero, so the early exit changes
/// nothing). Intended for matrices of modest norm; with 320 fractional
/// bits the result is far more accurate than f64 for any `||A||_1` a
/// rating generator produces.
pub fn expm_taylor_oracle(a: &[f64], n: usize, max_terms: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n, "row-major n x n buffer expected");
    let a_fixed: Vec<BigInt> = a.iter().copied().map(to_fixed).collect();

    let one = BigInt::from(1u8) << SCALE_BITS;
    let mut sum = vec![BigInt::zero(); n * n];
    let mut term = vec![BigInt::zero(); n * n];
    for i in 0..n {
        sum[i * n + i] = one.clone();
        term[i * n + i] = one.clone();
    }

    for k in 1..=max_terms {
        term = matmul_fixed(&term, &a_fixed, n);
        for entry in term.iter_mut() {
            *entry = &*entry / BigInt::from(k as u64);
        }
        if term.iter().all(Zero::is_zero) {
            break;
        }
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
    }

    sum.iter().map(from_fixed).collect()
}

/// Seeded RNG for reproducible fixtures; the seed is spread over the
/// first eight bytes of the ChaCha key.
pub fn fixture_rng(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Random intensity-matrix rows: off-diagonals uniform in
/// `[0, max_exit_rate / (n - 1)]`, diagonal the negated row sum.
pub fn random_generator_rows(n: usize, max_exit_rate: f64, rng: &mut impl RngCore) -> Vec<Vec<f64>> {
    assert!(n >= 2);
    let cap = max_exit_rate / (n - 1) as f64;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![0.0; n];
        let mut exit = 0.0;
        for (j, slot) in row.iter_mut().enumerate() {
            if j != i {
                let rate = uniform01(rng) * cap;
                *slot = rate;
                exit += rate;
            }
        }
        row[i] = -exit;
        rows.push(row);
    }
    rows
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
