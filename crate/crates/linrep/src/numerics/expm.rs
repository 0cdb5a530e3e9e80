//! Dense matrix exponential by scaling and squaring with diagonal Padé
//! approximants.
//!
//! Degree selection follows the standard backward-error analysis: the
//! smallest degree in {3, 5, 7, 9, 13} whose accuracy radius θ_m covers
//! ‖A‖₁ is used directly; otherwise A is scaled by 2^-s until ‖A‖₁/2^s ≤ θ₁₃,
//! the degree-13 approximant is evaluated, and the result squared s times.

use super::scalar::Scalar;
use super::NumericsError;
use ndarray::Array2;

/// Accuracy radii θ_m for the degree-m diagonal Padé approximant in double
/// precision.
const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_230e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068e0;
const THETA_13: f64 = 5.371_920_351_148_152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE_9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// exp(A) for a square matrix over `f64` or `Complex64`.
pub fn expm<S: Scalar>(a: &Array2<S>) -> Result<Array2<S>, NumericsError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(NumericsError::NotSquare { rows, cols });
    }
    if a.iter().any(|&x| !x.is_finite()) {
        return Err(NumericsError::NonFinite { context: "expm input" });
    }
    let n = rows;
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }

    let norm = one_norm(a);
    if norm <= THETA_3 {
        return pade_low(a, &PADE_3);
    }
    if norm <= THETA_5 {
        return pade_low(a, &PADE_5);
    }
    if norm <= THETA_7 {
        return pade_low(a, &PADE_7);
    }
    if norm <= THETA_9 {
        return pade_low(a, &PADE_9);
    }

    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scaled = a.mapv(|x| x.scale(0.5f64.powi(s as i32)));
    let mut result = pade_13(&scaled)?;
    for _ in 0..s {
        result = result.dot(&result);
    }
    Ok(result)
}

/// Max column sum of moduli.
fn one_norm<S: Scalar>(a: &Array2<S>) -> f64 {
    let mut best = 0.0f64;
    for col in a.columns() {
        let sum: f64 = col.iter().map(|&x| x.modulus()).sum();
        best = best.max(sum);
    }
    best
}

/// Degree 3/5/7/9 evaluation: U = A·Σ b_{2k+1} A^{2k}, V = Σ b_{2k} A^{2k},
/// then exp(A) ≈ (V − U)⁻¹ (V + U).
fn pade_low<S: Scalar>(a: &Array2<S>, b: &[f64]) -> Result<Array2<S>, NumericsError> {
    let n = a.nrows();
    let a2 = a.dot(a);
    let mut even = Array2::<S>::eye(n).mapv(|x| x.scale(b[0]));
    let mut odd_poly = Array2::<S>::eye(n).mapv(|x| x.scale(b[1]));
    let mut power = Array2::<S>::eye(n);
    for k in 1..=(b.len() - 2) / 2 {
        power = power.dot(&a2);
        even = even + power.mapv(|x| x.scale(b[2 * k]));
        if 2 * k + 1 < b.len() {
            odd_poly = odd_poly + power.mapv(|x| x.scale(b[2 * k + 1]));
        }
    }
    let u = a.dot(&odd_poly);
    rational_correction(&u, &even)
}

/// Degree 13 with the factored evaluation that needs only A², A⁴, A⁶.
fn pade_13<S: Scalar>(a: &Array2<S>) -> Result<Array2<S>, NumericsError> {
    let b = &PADE_13;
    let n = a.nrows();
    let ident = Array2::<S>::eye(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let u_high = a6.mapv(|x| x.scale(b[13])) + a4.mapv(|x| x.scale(b[11])) + a2.mapv(|x| x.scale(b[9]));
    let u_low = a6.mapv(|x| x.scale(b[7]))
        + a4.mapv(|x| x.scale(b[5]))
        + a2.mapv(|x| x.scale(b[3]))
        + ident.mapv(|x| x.scale(b[1]));
    let u = a.dot(&(a6.dot(&u_high) + u_low));

    let v_high = a6.mapv(|x| x.scale(b[12])) + a4.mapv(|x| x.scale(b[10])) + a2.mapv(|x| x.scale(b[8]));
    let v = a6.dot(&v_high)
        + a6.mapv(|x| x.scale(b[6]))
        + a4.mapv(|x| x.scale(b[4]))
        + a2.mapv(|x| x.scale(b[2]))
        + ident.mapv(|x| x.scale(b[0]));

    rational_correction(&u, &v)
}

/// Solve (V − U) X = (V + U).
fn rational_correction<S: Scalar>(
    u: &Array2<S>,
    v: &Array2<S>,
) -> Result<Array2<S>, NumericsError> {
    let mut denom = v - u;
    let mut numer = v + u;
    lu_solve_in_place(&mut denom, &mut numer)?;
    Ok(numer)
}

/// Partial-pivot LU factorization of `a` solving A·X = B in place; `b` holds
/// X on return.
pub(crate) fn lu_solve_in_place<S: Scalar>(
    a: &mut Array2<S>,
    b: &mut Array2<S>,
) -> Result<(), NumericsError> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.nrows(), n);
    let ncols_b = b.ncols();

    for k in 0..n {
        // Pivot on the largest modulus in the remaining column.
        let mut pivot_row = k;
        let mut pivot_mag = a[[k, k]].modulus();
        for i in k + 1..n {
            let mag = a[[i, k]].modulus();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = i;
            }
        }
        if pivot_mag == 0.0 || !pivot_mag.is_finite() {
            return Err(NumericsError::Singular {
                pivot: pivot_mag,
                step: k,
            });
        }
        if pivot_row != k {
            for j in 0..n {
                a.swap([k, j], [pivot_row, j]);
            }
            for j in 0..ncols_b {
                b.swap([k, j], [pivot_row, j]);
            }
        }
        let inv_pivot = S::one() / a[[k, k]];
        for i in k + 1..n {
            let factor = a[[i, k]] * inv_pivot;
            if factor == S::zero() {
                continue;
            }
            a[[i, k]] = factor;
            for j in k + 1..n {
                let akj = a[[k, j]];
                a[[i, j]] = a[[i, j]] - factor * akj;
            }
            for j in 0..ncols_b {
                let bkj = b[[k, j]];
                b[[i, j]] = b[[i, j]] - factor * bkj;
            }
        }
    }

    // Back substitution.
    for j in 0..ncols_b {
        for i in (0..n).rev() {
            let mut acc = b[[i, j]];
            for k in i + 1..n {
                acc = acc - a[[i, k]] * b[[k, j]];
            }
            b[[i, j]] = acc / a[[i, i]];
        }
    }
    Ok(())
}
