//! Thin FFT wrapper fixing the conventions used throughout: forward
//! transforms are unnormalized, inverse transforms carry the 1/N factor, and
//! the spectral derivative wavenumber at the Nyquist index is zeroed so that
//! the derivative of a real field stays conjugate-symmetric (equivalently:
//! the differentiation operator stays exactly Hermitian on even-length
//! grids).

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

pub struct FftPlan {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: RefCell<Vec<Complex64>>,
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        FftPlan {
            len,
            forward,
            inverse,
            scratch: RefCell::new(vec![Complex64::new(0.0, 0.0); scratch_len]),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform (unnormalized).
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len);
        let mut scratch = self.scratch.borrow_mut();
        self.forward.process_with_scratch(data, &mut scratch);
    }

    /// In-place inverse transform carrying the 1/N normalization, so
    /// `inverse(forward(v)) == v` up to roundoff.
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len);
        {
            let mut scratch = self.scratch.borrow_mut();
            self.inverse.process_with_scratch(data, &mut scratch);
        }
        let scale = 1.0 / self.len as f64;
        for value in data.iter_mut() {
            *value *= scale;
        }
    }
}

/// Angular wavenumbers k_m = 2π·m̃/(N·Δ) in standard FFT ordering, where m̃
/// runs over 0..N/2, then the negative frequencies. The Nyquist entry (even
/// N) is set to zero.
pub fn derivative_wavenumbers(len: usize, spacing: f64) -> Vec<f64> {
    let n = len as isize;
    let base = 2.0 * std::f64::consts::PI / (len as f64 * spacing);
    (0..n)
        .map(|m| {
            let signed = if 2 * m < n { m } else { m - n };
            if len % 2 == 0 && 2 * m == n {
                0.0
            } else {
                base * signed as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_transforms_to_all_ones() {
        let n = 16;
        let plan = FftPlan::new(n);
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        v[0] = Complex64::new(1.0, 0.0);
        plan.forward(&mut v);
        for z in &v {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let n = 1024;
        let plan = FftPlan::new(n);
        let original: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let mut v = original.clone();
        plan.forward(&mut v);
        plan.inverse(&mut v);
        let err = v
            .iter()
            .zip(&original)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "round trip error {err}");
    }

    #[test]
    fn parseval_identity_holds() {
        let n = 256;
        let plan = FftPlan::new(n);
        let original: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((i as f64 * 0.11).cos(), (i as f64 * 0.29).sin()))
            .collect();
        let mut v = original.clone();
        plan.forward(&mut v);
        let time_energy: f64 = original.iter().map(|z| z.norm_sqr()).sum();
        let freq_energy: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!((time_energy - freq_energy).abs() < 1e-10 * time_energy);
    }

    #[test]
    fn wavenumbers_follow_standard_ordering_with_zeroed_nyquist() {
        let k = derivative_wavenumbers(8, 0.5);
        let base = 2.0 * std::f64::consts::PI / 4.0;
        let expected = [0.0, base, 2.0 * base, 3.0 * base, 0.0, -3.0 * base, -2.0 * base, -base];
        for (a, b) in k.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn odd_length_keeps_all_modes() {
        let k = derivative_wavenumbers(5, 1.0);
        let base = 2.0 * std::f64::consts::PI / 5.0;
        let expected = [0.0, base, 2.0 * base, -2.0 * base, -base];
        for (a, b) in k.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
