//! Embedded Dormand–Prince 5(4) integrator with adaptive step control.
//!
//! The step is the classic seven-stage pair with the first-same-as-last
//! property. Error control uses the mixed absolute/relative norm
//! sqrt(mean((e_i / (atol + rtol·max(|y_i|, |y'_i|)))²)) with the usual
//! safety factor 0.9 and step-ratio clamps [0.2, 5].

use super::NumericsError;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
// Fifth-order weights (also the last stage's coefficients).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between fifth- and embedded fourth-order weights.
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 + 92097.0 / 339200.0;
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const MAX_STEPS: usize = 50_000_000;

/// Integrate ẏ = f(t, y) from `times[0]`, returning the state at every
/// requested time (the first entry is the initial state itself).
///
/// `times` must be strictly increasing. Steps never overshoot a requested
/// sample, so every output is an integration point, not an interpolation.
pub fn integrate<F>(
    mut rhs: F,
    y0: &[f64],
    times: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Vec<Vec<f64>>, NumericsError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if times.is_empty() {
        return Ok(Vec::new());
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(NumericsError::InvalidInput(
            "sample times must be strictly increasing".into(),
        ));
    }
    if !(abs_tol > 0.0 && abs_tol < 1.0 && rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(NumericsError::InvalidInput(
            "tolerances must lie in (0, 1)".into(),
        ));
    }

    let n = y0.len();
    let mut outputs = Vec::with_capacity(times.len());
    outputs.push(y0.to_vec());
    if times.len() == 1 {
        return Ok(outputs);
    }

    let mut t = times[0];
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    rhs(t, &y, &mut k1);
    check_finite(&k1, t)?;

    let mut h = initial_step(&y, &k1, abs_tol, rel_tol, times[times.len() - 1] - t);
    let mut stage = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    let mut next_sample = 1;
    for _ in 0..MAX_STEPS {
        if next_sample >= times.len() {
            return Ok(outputs);
        }
        let target = times[next_sample];
        let mut h_try = h.min(target - t);
        let hit_sample = h_try >= target - t - 1e-14 * target.abs().max(1.0);
        if hit_sample {
            h_try = target - t;
        }
        if h_try <= f64::EPSILON * t.abs().max(1.0) {
            return Err(NumericsError::StepUnderflow { time: t });
        }

        // Stages 2..6.
        for i in 0..n {
            stage[i] = y[i] + h_try * A21 * k1[i];
        }
        rhs(t + C2 * h_try, &stage, &mut k2);
        for i in 0..n {
            stage[i] = y[i] + h_try * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h_try, &stage, &mut k3);
        for i in 0..n {
            stage[i] = y[i] + h_try * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h_try, &stage, &mut k4);
        for i in 0..n {
            stage[i] = y[i] + h_try * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h_try, &stage, &mut k5);
        for i in 0..n {
            stage[i] = y[i]
                + h_try * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h_try, &stage, &mut k6);
        for i in 0..n {
            y_new[i] =
                y[i] + h_try * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        rhs(t + h_try, &y_new, &mut k7);

        if y_new.iter().any(|v| !v.is_finite()) || k7.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::Diverged { time: t + h_try });
        }

        // Scaled error norm of the embedded difference.
        let mut err_sq = 0.0;
        for i in 0..n {
            let e = h_try
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / n as f64).sqrt();

        if err <= 1.0 {
            t += h_try;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7); // first-same-as-last
            if hit_sample {
                outputs.push(y.clone());
                next_sample += 1;
                t = target; // suppress accumulated roundoff in t
            }
        }

        // Step-size update from the fifth-order error estimate.
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h_try * factor).max(f64::MIN_POSITIVE);
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(NumericsError::StepUnderflow { time: t });
        }
    }
    Err(NumericsError::InvalidInput(format!(
        "integration exceeded {MAX_STEPS} steps"
    )))
}

fn check_finite(values: &[f64], time: f64) -> Result<(), NumericsError> {
    if values.iter().any(|v| !v.is_finite()) {
        Err(NumericsError::Diverged { time })
    } else {
        Ok(())
    }
}

/// Conventional starting-step heuristic based on the initial derivative.
fn initial_step(y: &[f64], dy: &[f64], abs_tol: f64, rel_tol: f64, span: f64) -> f64 {
    let n = y.len() as f64;
    let d0 = (y
        .iter()
        .map(|v| {
            let s = abs_tol + rel_tol * v.abs();
            (v / s) * (v / s)
        })
        .sum::<f64>()
        / n)
        .sqrt();
    let d1 = (y
        .iter()
        .zip(dy)
        .map(|(v, d)| {
            let s = abs_tol + rel_tol * v.abs();
            (d / s) * (d / s)
        })
        .sum::<f64>()
        / n)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * (d0 / d1)
    };
    h0.min(span).max(1e-10)
}
