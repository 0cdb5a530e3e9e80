//! Summary statistics and error metrics over gridded densities.
//!
//! Every grid-based solver in this crate reduces to a nonnegative density
//! over a [`Grid`]; the statistics here (mode, mean, per-axis standard
//! deviation, boxed probability mass near a reference point) are the common
//! yardsticks used to compare the methods, plus the trajectory-level error
//! measures (rmse and first-exceedance horizon).

use crate::grid::Grid;
use crate::models::Trajectory;
use crate::numerics::{KahanSum, NumericsError};
use std::io::Write;

/// Coordinates of the density's argmax node; ties break to the lowest
/// flattened index so the result is deterministic.
pub fn mode(values: &[f64], grid: &Grid) -> Vec<f64> {
    debug_assert_eq!(values.len(), grid.total_points());
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    grid.node_coords(best)
}

/// Mean position Σᵢ pᵢ·xᵢ per axis (expects a normalized density).
pub fn mean(values: &[f64], grid: &Grid) -> Vec<f64> {
    debug_assert_eq!(values.len(), grid.total_points());
    let dim = grid.dim();
    let mut accumulators = vec![KahanSum::new(); dim];
    for (i, &p) in values.iter().enumerate() {
        let coords = grid.node_coords(i);
        for (acc, x) in accumulators.iter_mut().zip(coords) {
            acc.add(p * x);
        }
    }
    accumulators.iter().map(KahanSum::value).collect()
}

/// Per-axis standard deviation sqrt(Σᵢ pᵢ·(xᵢ − mean)²).
pub fn std_dev(values: &[f64], grid: &Grid) -> Vec<f64> {
    let centers = mean(values, grid);
    let dim = grid.dim();
    let mut accumulators = vec![KahanSum::new(); dim];
    for (i, &p) in values.iter().enumerate() {
        let coords = grid.node_coords(i);
        for ((acc, x), c) in accumulators.iter_mut().zip(coords).zip(&centers) {
            let d = x - c;
            acc.add(p * d * d);
        }
    }
    accumulators
        .iter()
        .map(|acc| acc.value().max(0.0).sqrt())
        .collect()
}

/// Probability mass within ε of a reference point: the sum of the density
/// over nodes whose every coordinate lies in the open interval
/// (x_ref − ε, x_ref + ε).
pub fn p_epsilon(values: &[f64], grid: &Grid, x_ref: &[f64], eps: f64) -> f64 {
    debug_assert_eq!(x_ref.len(), grid.dim());
    debug_assert!(eps > 0.0);
    let mut total = KahanSum::new();
    for (i, &p) in values.iter().enumerate() {
        let coords = grid.node_coords(i);
        if coords
            .iter()
            .zip(x_ref)
            .all(|(x, r)| (x - r).abs() < eps)
        {
            total.add(p);
        }
    }
    total.value()
}

/// Full-window root-mean-square error and first-exceedance horizon of a
/// predicted trajectory against a reference sharing the same time samples.
/// The per-sample error is the Euclidean distance between states; the
/// horizon is the first time it exceeds `threshold` (infinity if never).
pub fn trajectory_error(
    predicted: &Trajectory,
    reference: &Trajectory,
    threshold: f64,
) -> Result<(f64, f64), NumericsError> {
    if predicted.len() != reference.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: reference.len(),
            got: predicted.len(),
        });
    }
    for (a, b) in predicted.times().iter().zip(reference.times()) {
        if (a - b).abs() > 1e-12 * b.abs().max(1.0) {
            return Err(NumericsError::InvalidInput(format!(
                "trajectories sample different times: {a} vs {b}"
            )));
        }
    }
    let mut squares = KahanSum::new();
    let mut horizon = f64::INFINITY;
    for ((t, p), r) in predicted
        .times()
        .iter()
        .zip(predicted.states())
        .zip(reference.states())
    {
        let err: f64 = p
            .iter()
            .zip(r)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        squares.add(err * err);
        if err > threshold && horizon.is_infinite() {
            horizon = *t;
        }
    }
    let rmse = (squares.value() / predicted.len() as f64).sqrt();
    Ok((rmse, horizon))
}

/// One row of the per-run summary: the statistics of a density at one time.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub time: f64,
    pub mode: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// One entry per requested ε, aligned with the header's ε list.
    pub p_eps: Vec<f64>,
}

/// Compute the summary of one density snapshot. `reference` is the point
/// p_ε is measured around (the analytic or reference solution at `time`);
/// pass an empty `eps_values` to skip the p_ε columns.
pub fn summarize(
    values: &[f64],
    grid: &Grid,
    time: f64,
    reference: Option<&[f64]>,
    eps_values: &[f64],
) -> SummaryRow {
    let p_eps = match reference {
        Some(x_ref) => eps_values
            .iter()
            .map(|&eps| p_epsilon(values, grid, x_ref, eps))
            .collect(),
        None => Vec::new(),
    };
    SummaryRow {
        time,
        mode: mode(values, grid),
        mean: mean(values, grid),
        std: std_dev(values, grid),
        p_eps,
    }
}

/// Format a float with 17 significant digits (round-trip exact for f64).
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write summary rows as CSV: `t, mode_<axis>…, mean_<axis>…, std_<axis>…,
/// p_eps@<ε>…` with one row per time sample.
pub fn write_summary_csv<W: Write>(
    mut out: W,
    rows: &[SummaryRow],
    dim: usize,
    eps_values: &[f64],
) -> std::io::Result<()> {
    let axes: &[&str] = if dim == 1 { &["x"] } else { &["x", "y"] };
    let mut header = vec!["t".to_string()];
    for prefix in ["mode", "mean", "std"] {
        for axis in &axes[..dim] {
            header.push(format!("{prefix}_{axis}"));
        }
    }
    for eps in eps_values {
        header.push(format!("p_eps@{eps}"));
    }
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let mut fields = vec![format_f64(row.time)];
        fields.extend(row.mode.iter().map(|&v| format_f64(v)));
        fields.extend(row.mean.iter().map(|&v| format_f64(v)));
        fields.extend(row.std.iter().map(|&v| format_f64(v)));
        fields.extend(row.p_eps.iter().map(|&v| format_f64(v)));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
