//! Lifting polynomial ODEs to linear systems over monomial observables.
//!
//! For ẋ = F(x) with polynomial F, the observables g_α(x) = x^α satisfy a
//! *linear* but infinite hierarchy ġ = L·g. Truncating the hierarchy by
//! forcing ġ_α = 0 above a cutoff yields a finite linear system whose
//! solution approximates the flow for a while — and then fails in a
//! characteristic way this module makes measurable. For the quadratic decay
//! model there is also a one-dimensional invariant observable
//! g*(x) = exp(−1/x) with ġ* = −g*, giving an *exact* linear representation;
//! both routes are implemented so they can be compared.

use crate::models::Trajectory;
use crate::numerics::{self, CsrMatrix, NumericsError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CarlemanError {
    #[error("truncation order must be at least {min}, got {got}")]
    OrderTooSmall { min: usize, got: usize },
    #[error("error bound t^n/(1−t) requires 0 ≤ t < 1, got t = {0}")]
    BoundOutOfRange(f64),
    #[error("invariant observable requires x > 0, got {0}")]
    NonPositiveState(f64),
    #[error("invariant inverse requires g in (0, 1), got {0}")]
    InverseOutOfRange(f64),
    #[error("initial observables are not finite (|x0| too large for degree {degree})")]
    InitialOverflow { degree: u32 },
    #[error(transparent)]
    Integration(#[from] NumericsError),
}

/// An ordered basis of monomials x^α with total degree ≤ `max_total_degree`.
///
/// Ordering is graded: total degree ascending, and within a degree class the
/// first exponent descends (1D: x⁰, x¹, x², …; 2D: 1, x, y, x², xy, y², …).
/// Every module that indexes observables shares this ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    dim: usize,
    max_total_degree: u32,
    ordering: Vec<Vec<u32>>,
}

/// Enumerate all monomials of total degree ≤ `max_total_degree` in the
/// graded ordering described on [`MonomialBasis`].
pub fn enumerate_monomials(dim: usize, max_total_degree: u32) -> MonomialBasis {
    assert!(
        dim == 1 || dim == 2,
        "only 1- and 2-dimensional state spaces are supported"
    );
    let mut ordering = Vec::new();
    for degree in 0..=max_total_degree {
        match dim {
            1 => ordering.push(vec![degree]),
            2 => {
                for m in (0..=degree).rev() {
                    ordering.push(vec![m, degree - m]);
                }
            }
            _ => unreachable!(),
        }
    }
    MonomialBasis {
        dim,
        max_total_degree,
        ordering,
    }
}

impl MonomialBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_total_degree(&self) -> u32 {
        self.max_total_degree
    }

    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }

    pub fn exponents(&self, index: usize) -> &[u32] {
        &self.ordering[index]
    }

    pub fn ordering(&self) -> &[Vec<u32>] {
        &self.ordering
    }

    /// Index of a multi-index in the ordering, if it is inside the basis.
    pub fn index_of(&self, exponents: &[u32]) -> Option<usize> {
        if exponents.len() != self.dim {
            return None;
        }
        let degree: u32 = exponents.iter().sum();
        if degree > self.max_total_degree {
            return None;
        }
        // Positions of lower degree classes, then the offset inside the class.
        let index = match self.dim {
            1 => degree as usize,
            2 => {
                let class_start = (degree as usize) * (degree as usize + 1) / 2;
                class_start + (degree - exponents[0]) as usize
            }
            _ => unreachable!(),
        };
        debug_assert_eq!(self.ordering[index], exponents);
        Some(index)
    }

    /// Evaluate every monomial at a state, in basis order.
    pub fn evaluate_at(&self, state: &[f64]) -> Vec<f64> {
        assert_eq!(state.len(), self.dim);
        self.ordering
            .iter()
            .map(|exps| {
                exps.iter()
                    .zip(state)
                    .map(|(&e, &x)| x.powi(e as i32))
                    .product()
            })
            .collect()
    }

    /// Indices of the degree-one monomials (the state coordinates
    /// themselves), one per dimension, in coordinate order.
    pub fn degree_one_indices(&self) -> Vec<usize> {
        (0..self.dim)
            .map(|coord| {
                let mut exps = vec![0u32; self.dim];
                exps[coord] = 1;
                self.index_of(&exps)
                    .expect("basis of degree ≥ 1 contains the coordinates")
            })
            .collect()
    }
}

/// Which closure produced a truncated system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureTag {
    /// 1D decay hierarchy ġ_k = −k·g_{k+1} with ġ_order = 0.
    DecayTruncation { order: usize },
    /// 2D oscillator hierarchy with ġ_{m,n} = 0 for m+n ≥ degree−1.
    VdpTruncation { max_total_degree: u32 },
}

/// A finite linear system ġ = L·g over an ordered monomial basis.
#[derive(Debug, Clone)]
pub struct CarlemanSystem {
    basis: MonomialBasis,
    generator: CsrMatrix,
    closure: ClosureTag,
}

impl CarlemanSystem {
    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn generator(&self) -> &CsrMatrix {
        &self.generator
    }

    pub fn closure(&self) -> ClosureTag {
        self.closure
    }
}

/// Truncated lift of the decay model ẋ = −x²: observables g_k = x^k obey
/// ġ_k = −k·g_{k+1}, closed by ġ_order = 0 (and g_0 ≡ 1 constant).
pub fn lift_decay(truncation_order: usize) -> Result<CarlemanSystem, CarlemanError> {
    if truncation_order < 1 {
        return Err(CarlemanError::OrderTooSmall {
            min: 1,
            got: truncation_order,
        });
    }
    let basis = enumerate_monomials(1, truncation_order as u32);
    let mut triplets = Vec::with_capacity(truncation_order.saturating_sub(1));
    for k in 1..truncation_order {
        triplets.push((k, k + 1, -(k as f64)));
    }
    let n = basis.len();
    let generator = CsrMatrix::from_triplets(n, n, &triplets).expect("indices are in range");
    Ok(CarlemanSystem {
        basis,
        generator,
        closure: ClosureTag::DecayTruncation {
            order: truncation_order,
        },
    })
}

/// Truncated lift of the Van der Pol oscillator over g_{m,n} = x^m y^n:
/// ġ_{m,n} = m·g_{m−1,n+1} − n·g_{m+1,n−1} + µn·(g_{m,n} − g_{m+2,n}),
/// closed by ġ_{m,n} = 0 wherever m+n ≥ max_total_degree − 1 (those rows
/// would couple to monomials outside the basis).
pub fn lift_vdp(max_total_degree: u32, mu: f64) -> Result<CarlemanSystem, CarlemanError> {
    if max_total_degree < 3 {
        return Err(CarlemanError::OrderTooSmall {
            min: 3,
            got: max_total_degree as usize,
        });
    }
    let basis = enumerate_monomials(2, max_total_degree);
    let mut triplets = Vec::new();
    for (row, exps) in basis.ordering().iter().enumerate() {
        let (m, n) = (exps[0], exps[1]);
        if m + n >= max_total_degree - 1 {
            continue; // closure: this derivative is forced to zero
        }
        let mut couple = |target: &[u32], value: f64| {
            if value != 0.0 {
                if let Some(col) = basis.index_of(target) {
                    triplets.push((row, col, value));
                }
            }
        };
        if m > 0 {
            couple(&[m - 1, n + 1], m as f64);
        }
        if n > 0 {
            couple(&[m + 1, n - 1], -(n as f64));
            couple(&[m, n], mu * n as f64);
            couple(&[m + 2, n], -mu * n as f64);
        }
    }
    let size = basis.len();
    let generator = CsrMatrix::from_triplets(size, size, &triplets).expect("indices are in range");
    Ok(CarlemanSystem {
        basis,
        generator,
        closure: ClosureTag::VdpTruncation { max_total_degree },
    })
}

/// Integrate the truncated linear system ġ = L·g from the monomials of x0,
/// sampling at the requested times. Observable overflow (high powers exceed
/// the floating-point range) is reported as divergence with the first
/// offending time.
pub fn propagate_linear(
    system: &CarlemanSystem,
    x0: &[f64],
    times: &[f64],
) -> Result<Trajectory, CarlemanError> {
    let g0 = system.basis.evaluate_at(x0);
    if g0.iter().any(|v| !v.is_finite()) {
        return Err(CarlemanError::InitialOverflow {
            degree: system.basis.max_total_degree(),
        });
    }
    let generator = &system.generator;
    let states = numerics::ode::integrate(
        |_t, g, dg| generator.matvec(g, dg),
        &g0,
        times,
        1e-10,
        1e-10,
    )?;
    Ok(Trajectory::new(times.to_vec(), states).expect("times validated by the integrator"))
}

/// A-priori truncation error bound t^n/(1−t) for the decay model at unit
/// initial condition; only meaningful on 0 ≤ t < 1 (it diverges at t = 1).
pub fn carleman_error_bound(n: u32, t: f64) -> Result<f64, CarlemanError> {
    if !(0.0..1.0).contains(&t) {
        return Err(CarlemanError::BoundOutOfRange(t));
    }
    Ok(t.powi(n as i32) / (1.0 - t))
}

/// The invariant observable g*(x) = exp(−1/x) of the decay model; it evolves
/// exactly linearly: ġ* = −g*.
pub fn invariant_observable(x: f64) -> Result<f64, CarlemanError> {
    if !(x > 0.0) {
        return Err(CarlemanError::NonPositiveState(x));
    }
    Ok((-1.0 / x).exp())
}

/// Inverse of the invariant observable: x = −1 / ln(g) for g in (0, 1).
pub fn invariant_inverse(g: f64) -> Result<f64, CarlemanError> {
    if !(g > 0.0 && g < 1.0) {
        return Err(CarlemanError::InverseOutOfRange(g));
    }
    Ok(-1.0 / g.ln())
}

/// Solve the decay model exactly through the invariant observable:
/// x(t) = g*⁻¹(e^{−t} · g*(x0)).
pub fn solve_via_invariant(x0: f64, t: f64) -> Result<f64, CarlemanError> {
    let g = invariant_observable(x0)?;
    invariant_inverse((-t).exp() * g)
}
