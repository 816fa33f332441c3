//! Matrix exponential of intensity matrices via scaling-and-squaring
//! with a degree-13 Padé core (Higham 2005).
//!
//! `exp(s Q)` of a valid generator is row-stochastic; the result is
//! verified against that property and then renormalized to exact unit
//! row sums so downstream consumers never see accumulated drift.

use thiserror::Error;

use crate::matrix::{GeneratorMatrix, MatrixError, StochasticMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpmError {
    #[error("scale must be nonnegative, got {0}")]
    NegativeScale(f64),
    #[error("exponential failed the stochasticity check: {0}")]
    NotStochastic(String),
    #[error("linear solve broke down (singular Pade denominator)")]
    SingularSystem,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Degree-13 Padé coefficients, normalized so the constant term is 1.
const PADE13: [f64; 14] = [
    1.0,
    0.5,
    0.12,
    1.833_333_333_333_333_4e-2,
    1.992_753_623_188_405_8e-3,
    1.630_434_782_608_696e-4,
    1.035_196_687_370_6e-5,
    5.175_983_436_853e-7,
    2.043_151_356_652_5e-8,
    6.306_022_705_717_595e-10,
    1.483_770_048_404_14e-11,
    2.529_153_491_597_966e-13,
    2.810_170_546_219_962e-15,
    1.544_049_750_670_309e-17,
];

/// 1-norm threshold above which the argument is halved (f64 value from
/// the degree-13 backward-error analysis).
const THETA13: f64 = 5.371_920_351_148_152;

/// Computes `exp(s * Q)` for a generator `Q` and a nonnegative scale
/// `s` (the window length in years when `Q` carries per-year rates).
pub fn matrix_exponential<F: Scalar>(
    q: &GeneratorMatrix<F>,
    s: F,
) -> Result<StochasticMatrix<F>, ExpmError> {
    if s < F::zero() {
        return Err(ExpmError::NegativeScale(s.to_f64().unwrap_or(f64::NAN)));
    }
    let n = q.n();
    let a: Vec<F> = q.entries().iter().map(|&x| x * s).collect();

    // Scale A down until its 1-norm is inside the Padé(13) region.
    let norm = one_norm(&a, n).to_f64().unwrap_or(f64::INFINITY);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let scale = crate::scalar::lift::<F>(0.5).powi(squarings as i32);
    let a_scaled: Vec<F> = a.iter().map(|&x| x * scale).collect();

    let mut result = pade13(&a_scaled, n)?;
    for _ in 0..squarings {
        result = matmul(&result, &result, n);
    }

    finalize(result, n)
}

fn one_norm<F: Scalar>(a: &[F], n: usize) -> F {
    let mut max = F::zero();
    for j in 0..n {
        let mut col = F::zero();
        for i in 0..n {
            col += a[i * n + j].abs();
        }
        max = max.max(col);
    }
    max
}

fn matmul<F: Scalar>(a: &[F], b: &[F], n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = F::zero();
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

fn identity<F: Scalar>(n: usize) -> Vec<F> {
    let mut eye = vec![F::zero(); n * n];
    for i in 0..n {
        eye[i * n + i] = F::one();
    }
    eye
}

fn axpy_into<F: Scalar>(acc: &mut [F], coeff: F, m: &[F]) {
    for (a, &x) in acc.iter_mut().zip(m) {
        *a += coeff * x;
    }
}

/// Padé(13,13) rational approximation of exp(A) for small-norm A.
fn pade13<F: Scalar>(a: &[F], n: usize) -> Result<Vec<F>, ExpmError> {
    let b: Vec<F> = PADE13.iter().map(|&c| crate::scalar::lift::<F>(c)).collect();
    let eye = identity::<F>(n);
    let a2 = matmul(a, a, n);
    let a4 = matmul(&a2, &a2, n);
    let a6 = matmul(&a2, &a4, n);

    // U = A (A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I)
    let mut w1 = vec![F::zero(); n * n];
    axpy_into(&mut w1, b[13], &a6);
    axpy_into(&mut w1, b[11], &a4);
    axpy_into(&mut w1, b[9], &a2);
    let mut w2 = matmul(&w1, &a6, n);
    axpy_into(&mut w2, b[7], &a6);
    axpy_into(&mut w2, b[5], &a4);
    axpy_into(&mut w2, b[3], &a2);
    axpy_into(&mut w2, b[1], &eye);
    let u = matmul(a, &w2, n);

    // V = A6 (b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
    let mut v1 = vec![F::zero(); n * n];
    axpy_into(&mut v1, b[12], &a6);
    axpy_into(&mut v1, b[10], &a4);
    axpy_into(&mut v1, b[8], &a2);
    let mut v = matmul(&v1, &a6, n);
    axpy_into(&mut v, b[6], &a6);
    axpy_into(&mut v, b[4], &a4);
    axpy_into(&mut v, b[2], &a2);
    axpy_into(&mut v, b[0], &eye);

    // exp(A) ~ (V - U)^{-1} (V + U)
    let mut lhs = vec![F::zero(); n * n];
    let mut rhs = vec![F::zero(); n * n];
    for idx in 0..n * n {
        lhs[idx] = v[idx] - u[idx];
        rhs[idx] = v[idx] + u[idx];
    }
    solve(lhs, rhs, n)
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
fn solve<F: Scalar>(mut a: Vec<F>, mut b: Vec<F>, n: usize) -> Result<Vec<F>, ExpmError> {
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = a[col * n + col].abs();
        for row in col + 1..n {
            let mag = a[row * n + col].abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag == F::zero() {
            return Err(ExpmError::SingularSystem);
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
                b.swap(col * n + j, pivot_row * n + j);
            }
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == F::zero() {
                continue;
            }
            for j in col..n {
                let v = a[col * n + j];
                a[row * n + j] -= factor * v;
            }
            for j in 0..n {
                let v = b[col * n + j];
                b[row * n + j] -= factor * v;
            }
        }
    }

    let mut x = vec![F::zero(); n * n];
    for col in (0..n).rev() {
        let pivot = a[col * n + col];
        for j in 0..n {
            let mut acc = b[col * n + j];
            for k in col + 1..n {
                acc -= a[col * n + k] * x[k * n + j];
            }
            x[col * n + j] = acc / pivot;
        }
    }
    Ok(x)
}

/// Verifies the raw exponential is stochastic within the verification
/// tolerance, then clips negative round-off and renormalizes rows.
fn finalize<F: Scalar>(mut entries: Vec<F>, n: usize) -> Result<StochasticMatrix<F>, ExpmError> {
    let tol = F::expm_verify_tol();
    for i in 0..n {
        let mut sum = F::zero();
        for j in 0..n {
            let x = entries[i * n + j];
            if x < -tol {
                return Err(ExpmError::NotStochastic(format!(
                    "entry ({i}, {j}) = {:?} below zero",
                    x.to_f64()
                )));
            }
            sum += x;
        }
        if (sum - F::one()).abs() > tol {
            return Err(ExpmError::NotStochastic(format!(
                "row {i} sums to {:?}",
                sum.to_f64()
            )));
        }
    }
    for x in entries.iter_mut() {
        if *x < F::zero() {
            *x = F::zero();
        }
    }
    for i in 0..n {
        let mut sum = F::zero();
        for j in 0..n {
            sum += entries[i * n + j];
        }
        for j in 0..n {
            entries[i * n + j] /= sum;
        }
    }
    Ok(StochasticMatrix::new(n, entries)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric_two_state() -> GeneratorMatrix<f64> {
        GeneratorMatrix::from_rows(vec![vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    #[test]
    fn exp_of_zero_scale_is_identity() {
        let q = symmetric_two_state();
        let t = matrix_exponential(&q, 0.0).unwrap();
        assert_eq!(t, StochasticMatrix::identity(2));
    }

    #[test]
    fn exp_of_zero_generator_is_identity() {
        let q = GeneratorMatrix::<f64>::zero(4);
        let t = matrix_exponential(&q, 1.0).unwrap();
        assert_eq!(t, StochasticMatrix::identity(4));
    }

    #[test]
    fn symmetric_two_state_closed_form() {
        // Eigenvalues {0, -2}: diagonal (1 + e^-2)/2, off-diagonal (1 - e^-2)/2.
        let q = symmetric_two_state();
        let t = matrix_exponential(&q, 1.0).unwrap();
        let d = (1.0 + (-2.0f64).exp()) / 2.0;
        let o = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((t.get(0, 0) - d).abs() < 1e-14, "got {}", t.get(0, 0));
        assert!((t.get(0, 1) - o).abs() < 1e-14);
        assert!((t.get(1, 0) - o).abs() < 1e-14);
        assert!((t.get(1, 1) - d).abs() < 1e-14);
        assert!((t.get(0, 0) - 0.56767).abs() < 1e-5);
        assert!((t.get(0, 1) - 0.43233).abs() < 1e-5);
    }

    #[test]
    fn negative_scale_rejected() {
        let q = symmetric_two_state();
        assert!(matches!(
            matrix_exponential(&q, -0.5),
            Err(ExpmError::NegativeScale(_))
        ));
    }

    #[test]
    fn matches_series_oracle_on_random_generators() {
        for seed in 0..5u64 {
            let mut rng = ratemig_testkit::fixture_rng(900 + seed);
            let rows = ratemig_testkit::random_generator_rows(15, 2.0, &mut rng);
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let q = GeneratorMatrix::from_rows(rows).unwrap();
            let t = matrix_exponential(&q, 1.0).unwrap();
            let reference = ratemig_testkit::expm_taylor_oracle(&flat, 15, 200);
            let err = ratemig_testkit::max_abs_diff(t.entries(), &reference);
            assert!(err <= 1e-12, "seed {seed}: max entrywise error {err}");
        }
    }

    #[test]
    fn semigroup_property() {
        for seed in 0..5u64 {
            let mut rng = ratemig_testkit::fixture_rng(7_000 + seed);
            let rows = ratemig_testkit::random_generator_rows(8, 2.0, &mut rng);
            let q = GeneratorMatrix::from_rows(rows).unwrap();
            let full = matrix_exponential(&q, 1.0).unwrap();
            let part = matrix_exponential(&q, 0.3)
                .unwrap()
                .multiply(&matrix_exponential(&q, 0.7).unwrap())
                .unwrap();
            assert!(full.max_abs_diff(&part) <= 1e-10);
        }
    }

    #[test]
    fn small_scale_linearization() {
        // For s -> 0, exp(sQ) = I + sQ + O(s^2).
        let s = 1e-8;
        for seed in 0..3u64 {
            let mut rng = ratemig_testkit::fixture_rng(4_200 + seed);
            let rows = ratemig_testkit::random_generator_rows(6, 2.0, &mut rng);
            let q = GeneratorMatrix::from_rows(rows).unwrap();
            let t = matrix_exponential(&q, s).unwrap();
            let mut worst = 0.0f64;
            for i in 0..6 {
                for j in 0..6 {
                    let lin = if i == j { 1.0 + s * q.get(i, j) } else { s * q.get(i, j) };
                    worst = worst.max((t.get(i, j) - lin).abs());
                }
            }
            assert!(worst <= 1e-12, "seed {seed}: deviation {worst}");
        }
    }

    #[test]
    fn large_rates_need_scaling_and_stay_stochastic() {
        let q = GeneratorMatrix::from_rows(vec![
            vec![-40.0, 25.0, 15.0],
            vec![10.0, -30.0, 20.0],
            vec![5.0, 35.0, -40.0],
        ])
        .unwrap();
        let t = matrix_exponential(&q, 1.0).unwrap();
        for i in 0..3 {
            let sum: f64 = t.row(i).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
        let flat: Vec<f64> = q.to_rows().into_iter().flatten().collect();
        let reference = ratemig_testkit::expm_taylor_oracle(&flat, 3, 200);
        assert!(ratemig_testkit::max_abs_diff(t.entries(), &reference) <= 1e-12);
    }
}
