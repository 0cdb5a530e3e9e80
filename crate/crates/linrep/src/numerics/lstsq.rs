//! Minimum-norm linear least squares via Householder QR with column
//! pivoting, completed to an orthogonal decomposition when the matrix is
//! rank-deficient.
//!
//! Monomial dictionaries produce badly conditioned snapshot matrices, so the
//! fit must not go through the normal equations. Factoring A·P = Q·[R₁₁ R₁₂]
//! and annihilating R₁₂ from the right yields A·P = Q·[T 0]·Z with T
//! triangular of size `rank`; the minimum-norm solution follows by one
//! triangular solve and the application of Zᵀ.

use super::NumericsError;
use ndarray::{Array1, Array2};

#[derive(Debug, Clone)]
pub struct LeastSquaresSolution {
    /// X minimizing ‖A·X − B‖_F (minimum-norm among minimizers).
    pub solution: Array2<f64>,
    /// Numerical rank of A at threshold eps·max(m,n)·|R₀₀|.
    pub rank: usize,
    /// Frobenius norm of the final residual A·X − B.
    pub residual: f64,
}

pub fn least_squares(
    a: &Array2<f64>,
    b: &Array2<f64>,
) -> Result<LeastSquaresSolution, NumericsError> {
    let (m, n) = a.dim();
    let (mb, k) = b.dim();
    if m != mb {
        return Err(NumericsError::DimensionMismatch { expected: m, got: mb });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite { context: "least_squares input" });
    }

    let mut r = a.clone();
    let mut c = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);

    // Householder QR with column pivoting; Q is applied to `c` on the fly.
    for j in 0..steps {
        let mut best_col = j;
        let mut best_norm = 0.0f64;
        for col in j..n {
            let norm: f64 = (j..m).map(|i| r[[i, col]] * r[[i, col]]).sum();
            if norm > best_norm {
                best_norm = norm;
                best_col = col;
            }
        }
        if best_col != j {
            perm.swap(j, best_col);
            for i in 0..m {
                r.swap([i, j], [i, best_col]);
            }
        }

        let (beta, tau, v) = householder(&(j..m).map(|i| r[[i, j]]).collect::<Vec<_>>());
        if tau == 0.0 {
            continue;
        }
        r[[j, j]] = beta;
        for i in j + 1..m {
            r[[i, j]] = 0.0;
        }
        // Apply H = I − τ·u·uᵀ (u = [1, v]) to the remaining columns and to c.
        for col in j + 1..n {
            let mut s = r[[j, col]];
            for (offset, &vi) in v.iter().enumerate() {
                s += vi * r[[j + 1 + offset, col]];
            }
            s *= tau;
            r[[j, col]] -= s;
            for (offset, &vi) in v.iter().enumerate() {
                r[[j + 1 + offset, col]] -= s * vi;
            }
        }
        for col in 0..k {
            let mut s = c[[j, col]];
            for (offset, &vi) in v.iter().enumerate() {
                s += vi * c[[j + 1 + offset, col]];
            }
            s *= tau;
            c[[j, col]] -= s;
            for (offset, &vi) in v.iter().enumerate() {
                c[[j + 1 + offset, col]] -= s * vi;
            }
        }
    }

    // Numerical rank from the pivoted diagonal.
    let threshold = f64::EPSILON * m.max(n) as f64 * r[[0, 0]].abs();
    let mut rank = 0;
    for i in 0..steps {
        if r[[i, i]].abs() > threshold {
            rank += 1;
        } else {
            break;
        }
    }

    let mut x = Array2::<f64>::zeros((n, k));
    if rank > 0 {
        // Annihilate R₁₂ from the right: [R₁₁ R₁₂] → [T 0]·Z.
        let mut z_reflectors: Vec<(f64, Array1<f64>)> = Vec::new();
        if rank < n {
            for row in (0..rank).rev() {
                let alpha = r[[row, row]];
                let tail: Vec<f64> = (rank..n).map(|col| r[[row, col]]).collect();
                let (beta, tau, v) = householder_row(alpha, &tail);
                r[[row, row]] = beta;
                for col in rank..n {
                    r[[row, col]] = 0.0;
                }
                if tau != 0.0 {
                    for i in 0..row {
                        let mut s = r[[i, row]];
                        for (offset, &vi) in v.iter().enumerate() {
                            s += vi * r[[i, rank + offset]];
                        }
                        s *= tau;
                        r[[i, row]] -= s;
                        for (offset, &vi) in v.iter().enumerate() {
                            r[[i, rank + offset]] -= s * vi;
                        }
                    }
                }
                z_reflectors.push((tau, Array1::from(v)));
            }
            z_reflectors.reverse(); // index by row 0..rank
        }

        for col in 0..k {
            // Back-substitution on T.
            let mut y = vec![0.0f64; n];
            for i in (0..rank).rev() {
                let mut acc = c[[i, col]];
                for j in i + 1..rank {
                    acc -= r[[i, j]] * y[j];
                }
                y[i] = acc / r[[i, i]];
            }
            // y ← Zᵀ·y, applying reflectors row 0 first.
            for (row, (tau, v)) in z_reflectors.iter().enumerate() {
                if *tau == 0.0 {
                    continue;
                }
                let mut s = y[row];
                for (offset, &vi) in v.iter().enumerate() {
                    s += vi * y[rank + offset];
                }
                s *= tau;
                y[row] -= s;
                for (offset, &vi) in v.iter().enumerate() {
                    y[rank + offset] -= s * vi;
                }
            }
            // Undo the column permutation.
            for (i, &p) in perm.iter().enumerate() {
                x[[p, col]] = y[i];
            }
        }
    }

    let residual_matrix = a.dot(&x) - b;
    let residual = residual_matrix.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(LeastSquaresSolution {
        solution: x,
        rank,
        residual,
    })
}

/// Householder reflector for a column vector x: returns (β, τ, v) with
/// H·x = β·e₁ and H = I − τ·[1, v]·[1, v]ᵀ.
fn householder(x: &[f64]) -> (f64, f64, Vec<f64>) {
    let alpha = x[0];
    let sigma: f64 = x[1..].iter().map(|v| v * v).sum();
    if sigma == 0.0 {
        return (alpha, 0.0, vec![0.0; x.len().saturating_sub(1)]);
    }
    let mu = (alpha * alpha + sigma).sqrt();
    let beta = if alpha <= 0.0 { mu } else { -mu };
    let v0 = alpha - beta;
    let v: Vec<f64> = x[1..].iter().map(|&xi| xi / v0).collect();
    let tau = (beta - alpha) / beta;
    (beta, tau, v)
}

/// Same reflector built from a row's diagonal entry and trailing tail.
fn householder_row(alpha: f64, tail: &[f64]) -> (f64, f64, Vec<f64>) {
    let mut x = Vec::with_capacity(tail.len() + 1);
    x.push(alpha);
    x.extend_from_slice(tail);
    householder(&x)
}
