//! Krylov approximation of the exponential action w = exp(tA)·v without
//! forming exp(tA).
//!
//! An Arnoldi process projects A onto a small Hessenberg matrix H_m; the
//! action is approximated as β·V_m·exp(τH_m)·e₁ over adaptively chosen
//! substeps τ. The local error estimate comes from the augmented-matrix
//! trick: exponentiating the (m+2)×(m+2) extension of H_m yields the two
//! leading correction terms of the Krylov series, and their magnitudes drive
//! both acceptance and the next substep size. Shrinking a rejected substep
//! reuses the already-built basis, so rejections cost no extra matvecs.

use super::expm::expm;
use super::scalar::Scalar;
use super::sparse::CsrMatrix;
use super::NumericsError;
use ndarray::Array2;

/// Anything that can apply itself to a vector. Implemented by dense arrays,
/// sparse matrices, and matrix-free operators alike.
pub trait LinearOp<S: Scalar> {
    fn dim(&self) -> usize;
    /// y = A·x.
    fn apply(&self, x: &[S], y: &mut [S]);
}

impl LinearOp<f64> for CsrMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
}

impl<S: Scalar> LinearOp<S> for Array2<S> {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &[S], y: &mut [S]) {
        for (row, out) in self.rows().into_iter().zip(y.iter_mut()) {
            let mut acc = S::zero();
            for (a, b) in row.iter().zip(x.iter()) {
                acc = acc + *a * *b;
            }
            *out = acc;
        }
    }
}

const DEFAULT_KRYLOV_DIM: usize = 30;
const MAX_SUBSTEPS: usize = 100_000;
const MAX_REJECTS_PER_SUBSTEP: usize = 60;
const STEP_SAFETY: f64 = 0.9;
const ACCEPT_SLACK: f64 = 1.2;

/// w = exp(t·A)·v to relative tolerance `tol` (relative to ‖v‖, spread over
/// the whole interval).
pub fn expmv<S: Scalar>(
    op: &dyn LinearOp<S>,
    v: &[S],
    t: f64,
    tol: f64,
) -> Result<Vec<S>, NumericsError> {
    expmv_with_dim(op, v, t, tol, DEFAULT_KRYLOV_DIM)
}

pub fn expmv_with_dim<S: Scalar>(
    op: &dyn LinearOp<S>,
    v: &[S],
    t: f64,
    tol: f64,
    krylov_dim: usize,
) -> Result<Vec<S>, NumericsError> {
    let n = op.dim();
    if v.len() != n {
        return Err(NumericsError::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(NumericsError::InvalidInput("expmv tolerance must be > 0".into()));
    }
    if t == 0.0 || n == 0 {
        return Ok(v.to_vec());
    }

    let m = krylov_dim.clamp(1, n);
    let t_abs = t.abs();
    let sign = t.signum();
    let budget = tol * norm2(v).max(f64::MIN_POSITIVE); // error per unit time × t_abs

    let mut w = v.to_vec();
    let mut t_done = 0.0f64;
    let mut tau = t_abs;

    for _ in 0..MAX_SUBSTEPS {
        if t_done >= t_abs * (1.0 - 1e-14) {
            return Ok(w);
        }
        tau = tau.min(t_abs - t_done);

        let beta = norm2(&w);
        if beta == 0.0 {
            return Ok(w);
        }

        // Arnoldi with modified Gram-Schmidt.
        let mut basis: Vec<Vec<S>> = Vec::with_capacity(m + 1);
        basis.push(w.iter().map(|&x| x.scale(1.0 / beta)).collect());
        let mut h = Array2::<S>::zeros((m + 2, m + 2));
        let mut breakdown_at: Option<usize> = None;
        let mut work = vec![S::zero(); n];
        for j in 0..m {
            op.apply(&basis[j], &mut work);
            let mut col_scale = 0.0f64;
            for i in 0..=j {
                let hij = dot_conj(&basis[i], &work);
                h[[i, j]] = hij;
                col_scale = col_scale.max(hij.modulus());
                axpy(&mut work, basis[i].as_slice(), -hij);
            }
            let next_norm = norm2(&work);
            if !next_norm.is_finite() {
                return Err(NumericsError::NonFinite { context: "Arnoldi iteration" });
            }
            if next_norm <= 1e-12 * col_scale.max(1e-300) {
                breakdown_at = Some(j + 1);
                break;
            }
            h[[j + 1, j]] = S::from_f64(next_norm);
            basis.push(work.iter().map(|&x| x.scale(1.0 / next_norm)).collect());
        }

        if let Some(k) = breakdown_at {
            // The Krylov space is A-invariant: the projected exponential is
            // exact for the whole remaining interval.
            let tau_rest = t_abs - t_done;
            let h_small = h.slice(ndarray::s![..k, ..k]).mapv(|x| x.scale(sign * tau_rest));
            let f = expm(&h_small)?;
            w = reconstruct(&basis, &f, k, beta);
            return Ok(w);
        }

        // One extra matvec for the second-order error term.
        op.apply(&basis[m], &mut work);
        let avnorm = norm2(&work);
        let h_m1_m = h[[m, m - 1]];
        h[[m, m - 1]] = h_m1_m; // kept: couples the error block to H_m
        h[[m + 1, m]] = S::one();

        let mut accepted = false;
        for _reject in 0..MAX_REJECTS_PER_SUBSTEP {
            let h_aug = h.mapv(|x| x.scale(sign * tau));
            let f = expm(&h_aug)?;
            let err1 = beta * f[[m, 0]].modulus();
            let err2 = beta * f[[m + 1, 0]].modulus() * avnorm;
            let (err_loc, order_exp) = if err1 > 10.0 * err2 {
                (err2, 1.0 / m as f64)
            } else if err1 > err2 {
                ((err1 * err2) / (err1 - err2), 1.0 / m as f64)
            } else {
                (err1, 1.0 / (m as f64 - 1.0).max(1.0))
            };

            let allowance = ACCEPT_SLACK * budget * (tau / t_abs);
            if err_loc <= allowance || tau <= t_abs * 1e-12 {
                // Advance, keeping the first-order correction term.
                w = reconstruct(&basis, &f, m + 1, beta);
                t_done += tau;
                let target = budget * (tau / t_abs);
                let growth = if err_loc > 0.0 {
                    (STEP_SAFETY * (target / err_loc).powf(order_exp)).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                tau *= growth;
                accepted = true;
                break;
            }
            let target = budget * (tau / t_abs);
            let shrink = (STEP_SAFETY * (target / err_loc).powf(order_exp)).clamp(0.1, 0.9);
            tau *= shrink;
        }
        if !accepted {
            return Err(NumericsError::KrylovNoConvergence {
                tol,
                max_steps: MAX_REJECTS_PER_SUBSTEP,
            });
        }
    }
    Err(NumericsError::KrylovNoConvergence {
        tol,
        max_steps: MAX_SUBSTEPS,
    })
}

fn norm2<S: Scalar>(v: &[S]) -> f64 {
    v.iter().map(|x| x.modulus() * x.modulus()).sum::<f64>().sqrt()
}

fn dot_conj<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        acc = acc + Scalar::conj(*x) * *y;
    }
    acc
}

/// y += alpha·x
fn axpy<S: Scalar>(y: &mut [S], x: &[S], alpha: S) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi = *yi + alpha * *xi;
    }
}

/// β·V·F·e₁ truncated to the first `cols` basis vectors.
fn reconstruct<S: Scalar>(basis: &[Vec<S>], f: &Array2<S>, cols: usize, beta: f64) -> Vec<S> {
    let n = basis[0].len();
    let mut out = vec![S::zero(); n];
    for (i, column) in basis.iter().enumerate().take(cols.min(basis.len())) {
        let coeff = f[[i, 0]].scale(beta);
        axpy(&mut out, column, coeff);
    }
    out
}
