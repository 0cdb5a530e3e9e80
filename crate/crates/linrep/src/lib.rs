//! Linear representations of nonlinear dynamics.
//!
//! A nonlinear ODE ẋ = F(x) can be traded for *linear* evolution in a larger
//! space in several classical ways, each with its own failure modes. This
//! crate implements four of them side by side so they can be compared on the
//! same benchmark flows:
//!
//! - [`carleman`]: lifting to monomial observables g = (1, x, x², …) with a
//!   zero-derivative truncation closure, plus the exact solver available when
//!   the flow admits a one-dimensional invariant observable.
//! - [`edmd`]: a least-squares fit of the finite-time observable propagator
//!   K_δ on a small dictionary from snapshot pairs, applied recursively.
//! - [`kvn`]: classical wave mechanics — a complex wavefunction on a grid
//!   evolved unitarily by the Hermitian generator ½(𝓟F + F𝓟), with densities
//!   recovered through ρ = |ψ|².
//! - [`liouville`]: the first-order upwind / master-equation discretization
//!   of the Liouville equation, a Markov generator on the same grid.
//!
//! [`models`] defines the benchmark flows (the quadratic decay model
//! ẋ = −x² with known solution, and the Van der Pol oscillator) together
//! with a high-accuracy adaptive reference integrator. [`diagnostics`]
//! computes the summary statistics (mode, mean, standard deviation, boxed
//! probability mass) used to judge the methods. [`numerics`] houses the
//! shared kernels: dense matrix exponential, Krylov exponential action,
//! rank-revealing least squares, FFT differentiation, sparse matvec, and the
//! embedded Runge–Kutta integrator.

pub mod carleman;
pub mod diagnostics;
pub mod edmd;
pub mod grid;
pub mod kvn;
pub mod liouville;
pub mod models;
pub mod numerics;

pub use grid::Grid;
