//! Shared numerical kernels.
//!
//! Everything here is deterministic: reduction orders are fixed and there is
//! no run-to-run variation, so downstream experiment output is byte-stable.

pub mod expm;
pub mod expmv;
pub mod fft;
pub mod lstsq;
pub mod ode;
pub mod scalar;
pub mod sparse;

pub use expm::expm;
pub use expmv::{expmv, LinearOp};
pub use fft::FftPlan;
pub use lstsq::{least_squares, LeastSquaresSolution};
pub use scalar::Scalar;
pub use sparse::CsrMatrix;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("singular linear system (pivot {pivot:.3e} at step {step})")]
    Singular { pivot: f64, step: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Krylov iteration did not reach tolerance {tol:.3e} within {max_steps} substeps")]
    KrylovNoConvergence { tol: f64, max_steps: usize },
    #[error("step size underflow at t = {time:.6e}; the problem appears too stiff for this integrator")]
    StepUnderflow { time: f64 },
    #[error("solution became non-finite at t = {time:.6e}")]
    Diverged { time: f64 },
    #[error("{0}")]
    InvalidInput(String),
}

/// Compensated (Kahan) summation.
///
/// Probability bookkeeping has to certify drifts of 1e-10 on vectors with
/// tens of thousands of entries; naive summation alone would eat most of
/// that budget.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Sum of a slice with compensated accumulation.
pub fn kahan_sum(values: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}
