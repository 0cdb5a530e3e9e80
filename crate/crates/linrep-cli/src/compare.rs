//! Cross-run comparison: RMSE and divergence horizon of each run's state
//! estimate against a reference run.
//!
//! Observable runs are compared through their trajectory; grid runs through
//! the distribution mode and mean recorded in their summary. All runs must
//! share the reference's time sampling.

use linrep::diagnostics::{format_f64, trajectory_error};
use linrep::models::Trajectory;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("incompatible sampling: {0}")]
    Incompatible(String),
}

fn malformed(path: &Path, message: impl Into<String>) -> CompareError {
    CompareError::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// One comparison result: a run's estimator (trajectory state, or
/// distribution mode/mean) against the reference trajectory.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub run: String,
    pub estimator: &'static str,
    pub rmse: f64,
    /// First sample time at which any component deviates by more than the
    /// threshold; infinite when the run never deviates.
    pub horizon: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub threshold: f64,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    /// Human-readable fixed-width table.
    pub fn table(&self) -> String {
        let mut width = "run".len();
        for row in &self.rows {
            width = width.max(row.run.len());
        }
        let mut text = format!(
            "{:<width$}  {:<9}  {:>12}  {:>12}\n",
            "run", "estimator", "rmse", "horizon"
        );
        for row in &self.rows {
            text.push_str(&format!(
                "{:<width$}  {:<9}  {:>12.6e}  {:>12}\n",
                row.run,
                row.estimator,
                row.rmse,
                if row.horizon.is_finite() {
                    format!("{:.4}", row.horizon)
                } else {
                    "never".to_string()
                },
            ));
        }
        text.push_str(&format!("(divergence threshold: {})\n", self.threshold));
        text
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "run,estimator,rmse,horizon")?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                row.run,
                row.estimator,
                format_f64(row.rmse),
                format_f64(row.horizon)
            )?;
        }
        Ok(())
    }
}

/// Compare every run directory against the reference run's trajectory.
pub fn compare_runs(
    run_dirs: &[PathBuf],
    reference_dir: &Path,
    threshold: f64,
) -> Result<CompareReport, CompareError> {
    let reference = load_reference(reference_dir)?;
    let mut rows = Vec::new();
    for dir in run_dirs {
        let run = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        for (estimator, trajectory) in load_estimators(dir)? {
            let (rmse, horizon) = trajectory_error(&trajectory, &reference, threshold)
                .map_err(|e| CompareError::Incompatible(format!("{run}: {e}")))?;
            rows.push(CompareRow {
                run: run.clone(),
                estimator,
                rmse,
                horizon,
            });
        }
    }
    Ok(CompareReport { threshold, rows })
}

fn load_reference(dir: &Path) -> Result<Trajectory, CompareError> {
    let path = dir.join("trajectory.csv");
    if !path.exists() {
        return Err(malformed(
            &path,
            "reference run must provide a trajectory (observable method)",
        ));
    }
    load_trajectory(&path)
}

/// The estimators a run directory offers: the trajectory itself for
/// observable runs, the summary's mode and mean for grid runs.
fn load_estimators(dir: &Path) -> Result<Vec<(&'static str, Trajectory)>, CompareError> {
    let trajectory_path = dir.join("trajectory.csv");
    if trajectory_path.exists() {
        return Ok(vec![("state", load_trajectory(&trajectory_path)?)]);
    }
    let summary_path = dir.join("summary.csv");
    if summary_path.exists() {
        let (mode, mean) = load_summary(&summary_path)?;
        return Ok(vec![("mode", mode), ("mean", mean)]);
    }
    Err(malformed(
        &dir.join("trajectory.csv"),
        "run directory has neither trajectory.csv nor summary.csv",
    ))
}

fn parse_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CompareError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| malformed(path, "empty file"))?
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut records = Vec::new();
    for (number, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Vec<f64> = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|e| {
                    malformed(path, format!("record {}: {e}", number + 1))
                })
            })
            .collect::<Result<_, _>>()?;
        if record.len() != header.len() {
            return Err(malformed(
                path,
                format!(
                    "record {}: {} fields, header has {}",
                    number + 1,
                    record.len(),
                    header.len()
                ),
            ));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(malformed(path, "no data records"));
    }
    Ok((header, records))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize, CompareError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| malformed(path, format!("missing column `{name}`")))
}

fn load_trajectory(path: &Path) -> Result<Trajectory, CompareError> {
    let (header, records) = parse_csv(path)?;
    let t = column(&header, "t", path)?;
    let coords: Vec<usize> = match column(&header, "y", path) {
        Ok(y) => vec![column(&header, "x", path)?, y],
        Err(_) => vec![column(&header, "x", path)?],
    };
    build_trajectory(path, &records, t, &coords)
}

/// Extract the mode and mean trajectories from a summary table.
fn load_summary(path: &Path) -> Result<(Trajectory, Trajectory), CompareError> {
    let (header, records) = parse_csv(path)?;
    let t = column(&header, "t", path)?;
    let two_dim = header.iter().any(|h| h == "mode_y");
    let axes: &[&str] = if two_dim { &["x", "y"] } else { &["x"] };
    let mut extracted = Vec::new();
    for prefix in ["mode", "mean"] {
        let coords: Vec<usize> = axes
            .iter()
            .map(|axis| column(&header, &format!("{prefix}_{axis}"), path))
            .collect::<Result<_, _>>()?;
        extracted.push(build_trajectory(path, &records, t, &coords)?);
    }
    let mean = extracted.pop().expect("two prefixes");
    let mode = extracted.pop().expect("two prefixes");
    Ok((mode, mean))
}

fn build_trajectory(
    path: &Path,
    records: &[Vec<f64>],
    t: usize,
    coords: &[usize],
) -> Result<Trajectory, CompareError> {
    let times: Vec<f64> = records.iter().map(|r| r[t]).collect();
    let states: Vec<Vec<f64>> = records
        .iter()
        .map(|r| coords.iter().map(|&c| r[c]).collect())
        .collect();
    Trajectory::new(times, states).map_err(|e| malformed(path, e.to_string()))
}
