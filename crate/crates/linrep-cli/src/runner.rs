//! Executes one experiment config end to end and persists the artifacts.
//!
//! Grid methods produce `summary.csv` (per-sample diagnostics) and
//! `heatmap.csv` (raw densities); observable methods produce
//! `trajectory.csv`. Every run writes `meta.json` with the config echo,
//! wall time, and the method's invariant residuals — including when the run
//! fails numerically, so a failure leaves an inspectable record.

use crate::config::{
    ConfigError, ExperimentConfig, GridConfig, InitialConfig, MethodKind, ModelConfig,
    PropagatorConfig,
};
use linrep::carleman::{enumerate_monomials, lift_decay, lift_vdp, propagate_linear,
    solve_via_invariant};
use linrep::diagnostics::{self, format_f64, SummaryRow};
use linrep::edmd::{build_snapshots, fit_koopman_regularized, predict_recursive};
use linrep::grid::GridAxis;
use linrep::kvn::{
    delta_initial, gaussian_initial, PropagatorChoice, UnitaryStepper, WaveGenerator,
};
use linrep::liouville::{
    assemble_cme_1d, assemble_cme_2d, propagate_cme, CmeMethod, MarkovGenerator,
    ProbabilityVector,
};
use linrep::models::{
    analytic_decay_solution, decay_flow, reference_trajectory, vdp_flow, vdp_limit_cycle_point,
    FlowField,
};
use linrep::numerics::expm;
use linrep::Grid;
use num_complex::Complex64;
use serde_json::{json, Value};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

/// Environment variable prepended to relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "LINREP_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// In-memory view of a finished run, for callers driving runs as a library.
pub struct RunOutput {
    pub directory: PathBuf,
    pub times: Vec<f64>,
    /// State trajectory (observable methods).
    pub states: Option<Vec<Vec<f64>>>,
    /// Per-sample density diagnostics (grid methods).
    pub summary: Option<Vec<SummaryRow>>,
    /// Invariant residuals as recorded in meta.json.
    pub invariants: Value,
}

/// Run with the output root taken from [`OUTPUT_ROOT_VAR`] (or the current
/// directory when unset).
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let root = std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    run_experiment_in(config, &root)
}

/// Run with an explicit output root for relative output directories.
pub fn run_experiment_in(config: &ExperimentConfig, root: &Path) -> Result<RunOutput, RunError> {
    config.validate()?;
    let directory = if config.output.is_absolute() {
        config.output.clone()
    } else {
        root.join(&config.output)
    };
    fs::create_dir_all(&directory)?;
    let started = Instant::now();
    let result = dispatch(config, &directory);
    let wall = started.elapsed().as_secs_f64();
    match result {
        Ok(mut output) => {
            write_meta(config, &directory, wall, &output.invariants, None)?;
            output.directory = directory;
            Ok(output)
        }
        Err(RunError::Numerical(message)) => {
            write_meta(config, &directory, wall, &Value::Null, Some(&message))?;
            Err(RunError::Numerical(message))
        }
        Err(other) => Err(other),
    }
}

fn dispatch(config: &ExperimentConfig, directory: &Path) -> Result<RunOutput, RunError> {
    match config.method {
        MethodKind::Reference => run_reference(config, directory),
        MethodKind::InvariantExact => run_invariant(config, directory),
        MethodKind::CarlemanTruncation => run_carleman(config, directory),
        MethodKind::EdmdProjection => run_edmd(config, directory),
        MethodKind::Kvn => run_kvn(config, directory),
        MethodKind::CmeExponential | MethodKind::CmeEuler => run_cme(config, directory),
    }
}

fn numerical(err: impl std::fmt::Display) -> RunError {
    RunError::Numerical(err.to_string())
}

// ---------------------------------------------------------------- shared --

fn sample_times(config: &ExperimentConfig) -> Vec<f64> {
    (0..=config.steps).map(|k| k as f64 * config.delta).collect()
}

fn model_flow(model: &ModelConfig) -> FlowField {
    match model {
        ModelConfig::Decay { .. } => decay_flow(),
        ModelConfig::Vdp { mu, .. } => vdp_flow(*mu),
    }
}

/// The model's start state: x0 for decay; for Van der Pol either the
/// warmed-up limit-cycle point or the raw (2, 0).
fn start_state(model: &ModelConfig) -> Result<Vec<f64>, RunError> {
    match model {
        ModelConfig::Decay { x0 } => Ok(vec![*x0]),
        ModelConfig::Vdp { mu, warm_up } => {
            if *warm_up {
                vdp_limit_cycle_point(*mu, 100.0).map_err(numerical)
            } else {
                Ok(vec![2.0, 0.0])
            }
        }
    }
}

fn build_grid(grid: &GridConfig) -> Result<Grid, RunError> {
    match &grid.y {
        None => Grid::line(grid.x.low, grid.x.high, grid.x.points).map_err(numerical),
        Some(y) => {
            let x = GridAxis::new(grid.x.low, grid.x.high, grid.x.points).map_err(numerical)?;
            let y = GridAxis::new(y.low, y.high, y.points).map_err(numerical)?;
            Ok(Grid::plane(x, y))
        }
    }
}

/// Reference points the near-solution mass p_ε is measured around: the
/// analytic solution for decay, a tight adaptive integration for Van der
/// Pol.
fn reference_points(
    model: &ModelConfig,
    start: &[f64],
    times: &[f64],
) -> Result<Vec<Vec<f64>>, RunError> {
    match model {
        ModelConfig::Decay { x0 } => times
            .iter()
            .map(|&t| {
                analytic_decay_solution(*x0, t)
                    .map(|x| vec![x])
                    .map_err(numerical)
            })
            .collect(),
        ModelConfig::Vdp { mu, .. } => {
            let trajectory = reference_trajectory(&vdp_flow(*mu), start, times, 1e-10, 1e-10)
                .map_err(numerical)?;
            Ok(trajectory.states().to_vec())
        }
    }
}

fn write_trajectory_csv(
    directory: &Path,
    times: &[f64],
    states: &[Vec<f64>],
) -> Result<(), RunError> {
    let mut out = BufWriter::new(fs::File::create(directory.join("trajectory.csv"))?);
    let header: &str = if states.first().map_or(1, Vec::len) == 1 {
        "t,x"
    } else {
        "t,x,y"
    };
    writeln!(out, "{header}")?;
    for (t, state) in times.iter().zip(states) {
        let mut fields = vec![format_f64(*t)];
        fields.extend(state.iter().map(|&v| format_f64(v)));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

fn write_summary_csv_file(
    directory: &Path,
    rows: &[SummaryRow],
    dim: usize,
    epsilons: &[f64],
) -> Result<(), RunError> {
    let out = BufWriter::new(fs::File::create(directory.join("summary.csv"))?);
    diagnostics::write_summary_csv(out, rows, dim, epsilons)?;
    Ok(())
}

/// Incremental heatmap writer: `# grid: …` shape comment, one labeled
/// column per node, one row per written sample.
struct HeatmapWriter {
    out: BufWriter<fs::File>,
    stride: usize,
}

impl HeatmapWriter {
    fn create(directory: &Path, grid: &Grid, stride: usize) -> Result<Self, RunError> {
        let mut out = BufWriter::new(fs::File::create(directory.join("heatmap.csv"))?);
        let shape = match grid.dim() {
            1 => format!(
                "# grid: nx={} x_low={} x_high={}",
                grid.axis(0).points(),
                grid.axis(0).low(),
                grid.axis(0).high()
            ),
            _ => format!(
                "# grid: nx={} ny={} x_low={} x_high={} y_low={} y_high={} layout: node = ix*ny + iy",
                grid.axis(0).points(),
                grid.axis(1).points(),
                grid.axis(0).low(),
                grid.axis(0).high(),
                grid.axis(1).low(),
                grid.axis(1).high()
            ),
        };
        writeln!(out, "{shape}")?;
        let mut header = vec!["t".to_string()];
        header.extend((0..grid.total_points()).map(|i| format!("n{i}")));
        writeln!(out, "{}", header.join(","))?;
        Ok(HeatmapWriter { out, stride })
    }

    fn maybe_write(&mut self, step: usize, t: f64, density: &[f64]) -> Result<(), RunError> {
        if step % self.stride != 0 {
            return Ok(());
        }
        let mut fields = Vec::with_capacity(density.len() + 1);
        fields.push(format_f64(t));
        fields.extend(density.iter().map(|&v| format_f64(v)));
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }
}

fn write_meta(
    config: &ExperimentConfig,
    directory: &Path,
    wall_seconds: f64,
    invariants: &Value,
    error: Option<&str>,
) -> Result<(), RunError> {
    let meta = json!({
        "config": config,
        "status": if error.is_none() { "ok" } else { "failed" },
        "error": error,
        "wall_seconds": wall_seconds,
        "invariants": invariants,
    });
    fs::write(
        directory.join("meta.json"),
        serde_json::to_string_pretty(&meta).expect("meta is serializable"),
    )?;
    Ok(())
}

fn observable_output(
    directory: &Path,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    invariants: Value,
) -> Result<RunOutput, RunError> {
    write_trajectory_csv(directory, &times, &states)?;
    Ok(RunOutput {
        directory: directory.to_path_buf(),
        times,
        states: Some(states),
        summary: None,
        invariants,
    })
}

// ------------------------------------------------------------ observable --

fn run_reference(config: &ExperimentConfig, directory: &Path) -> Result<RunOutput, RunError> {
    let times = sample_times(config);
    let start = start_state(&config.model)?;
    let trajectory = reference_trajectory(&model_flow(&config.model), &start, &times, 1e-10, 1e-10)
        .map_err(numerical)?;
    let invariants = json!({"integration_tolerance": 1e-10});
    observable_output(
        directory,
        times,
        trajectory.states().to_vec(),
        invariants,
    )
}

fn run_invariant(config: &ExperimentConfig, directory: &Path) -> Result<RunOutput, RunError> {
    let times = sample_times(config);
    let x0 = match config.model {
        ModelConfig::Decay { x0 } => x0,
        _ => unreachable!("validated: invariant_exact is decay-only"),
    };
    let states: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| solve_via_invariant(x0, t).map(|x| vec![x]).map_err(numerical))
        .collect::<Result<_, _>>()?;
    observable_output(directory, times, states, json!({"closed_form": true}))
}

fn run_carleman(config: &ExperimentConfig, directory: &Path) -> Result<RunOutput, RunError> {
    let times = sample_times(config);
    let start = start_state(&config.model)?;
    let order = config.order.expect("validated");
    let system = match config.model {
        ModelConfig::Decay { .. } => lift_decay(order as usize).map_err(numerical)?,
        ModelConfig::Vdp { mu, .. } => lift_vdp(order, mu).map_err(numerical)?,
    };
    let lifted = propagate_linear(&system, &start, &times).map_err(numerical)?;
    let ones = system.basis().degree_one_indices();
    let states: Vec<Vec<f64>> = lifted
        .states()
        .iter()
        .map(|g| ones.iter().map(|&i| g[i]).collect())
        .collect();
    let invariants = json!({
        "basis_size": system.basis().len(),
        "generator_nonzeros": system.generator().nnz(),
    });
    observable_output(directory, times, states, invariants)
}

fn run_edmd(config: &ExperimentConfig, directory: &Path) -> Result<RunOutput, RunError> {
    let times = sample_times(config);
    let start = start_state(&config.model)?;
    let degree = config.dictionary_degree.expect("validated");
    let dictionary = enumerate_monomials(config.model.dim(), degree);
    // Training data: the reference trajectory sampled at the run's own δ
    // over the run's own horizon.
    let training = reference_trajectory(&model_flow(&config.model), &start, &times, 1e-10, 1e-10)
        .map_err(numerical)?;
    let snapshots = build_snapshots(&training, &dictionary, config.delta).map_err(numerical)?;
    let koopman =
        fit_koopman_regularized(&snapshots, config.tikhonov).map_err(numerical)?;
    let predicted = predict_recursive(&koopman, &start, config.steps);
    let ones = dictionary.degree_one_indices();
    let states: Vec<Vec<f64>> = predicted
        .states()
        .iter()
        .map(|g| ones.iter().map(|&i| g[i]).collect())
        .collect();
    write_koopman_csv(directory, &koopman)?;
    let invariants = json!({
        "dictionary_size": dictionary.len(),
        "fit_pairs": snapshots.pairs(),
        "rank": koopman.rank(),
        "rank_deficient": koopman.is_rank_deficient(),
        "fit_residual": koopman.residual(),
    });
    observable_output(directory, times, states, invariants)
}

fn write_koopman_csv(
    directory: &Path,
    koopman: &linrep::edmd::KoopmanMatrix,
) -> Result<(), RunError> {
    let mut out = BufWriter::new(fs::File::create(directory.join("koopman.csv"))?);
    let labels: Vec<String> = koopman
        .dictionary()
        .ordering()
        .iter()
        .map(|exps| {
            let tag: Vec<String> = exps.iter().map(u32::to_string).collect();
            format!("g{}", tag.join("_"))
        })
        .collect();
    writeln!(out, "target,{}", labels.join(","))?;
    for (label, row) in labels.iter().zip(koopman.matrix().rows()) {
        let fields: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        writeln!(out, "{label},{}", fields.join(","))?;
    }
    Ok(())
}

// ------------------------------------------------------------------ grid --

/// Deterministic matrix-free Hermiticity probe: |⟨u, Hv⟩ − ⟨Hu, v⟩| on a
/// fixed pseudo-random pair of unit vectors.
fn hermiticity_residual(generator: &WaveGenerator) -> f64 {
    let n = generator.nodes();
    let mut seed = 0x5eed_cafe_f00d_beefu64;
    let mut next = move || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let normalize = |mut v: Vec<Complex64>| {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut v {
            *z /= norm;
        }
        v
    };
    let u = normalize((0..n).map(|_| Complex64::new(next(), next())).collect());
    let v = normalize((0..n).map(|_| Complex64::new(next(), next())).collect());
    let mut hu = vec![Complex64::new(0.0, 0.0); n];
    let mut hv = vec![Complex64::new(0.0, 0.0); n];
    generator.apply(&u, &mut hu);
    generator.apply(&v, &mut hv);
    let lhs: Complex64 = u.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
    let rhs: Complex64 = hu.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
    (lhs - rhs).norm()
}

fn run_kvn(config: &ExperimentConfig, directory: &Path) -> Result<RunOutput, RunError> {
    let times = sample_times(config);
    let start = start_state(&config.model)?;
    let grid = build_grid(config.grid.as_ref().expect("validated"))?;
    let flow = model_flow(&config.model);
    let generator = WaveGenerator::new(&grid, &flow).map_err(numerical)?;
    let herm = hermiticity_residual(&generator);
    let choice = match config.propagator.unwrap_or_default() {
        PropagatorConfig::Dense => PropagatorChoice::Dense,
        PropagatorConfig::Krylov => PropagatorChoice::Krylov,
        PropagatorConfig::Auto => PropagatorChoice::Auto,
    };
    let stepper = UnitaryStepper::new(generator, config.delta, choice).map_err(numerical)?;
    let mut psi = match config.initial.expect("validated") {
        InitialConfig::Delta => delta_initial(&grid, &start).map_err(numerical)?,
        InitialConfig::Gaussian { support_points } => {
            gaussian_initial(&grid, &start, support_points).map_err(numerical)?
        }
    };
    let references = if config.epsilons.is_empty() {
        None
    } else {
        Some(reference_points(&config.model, &start, &times)?)
    };
    let mut heatmap = HeatmapWriter::create(directory, &grid, config.heatmap_stride)?;
    let mut rows = Vec::with_capacity(times.len());
    for (step, &t) in times.iter().enumerate() {
        let density = psi.born_density();
        let x_ref = references.as_ref().map(|r| r[step].as_slice());
        rows.push(diagnostics::summarize(
            &density,
            &grid,
            t,
            x_ref,
            &config.epsilons,
        ));
        heatmap.maybe_write(step, t, &density)?;
        if step < config.steps {
            stepper.step(&mut psi).map_err(numerical)?;
        }
    }
    write_summary_csv_file(directory, &rows, grid.dim(), &config.epsilons)?;
    let invariants = json!({
        "propagator": if stepper.is_dense() { "dense" } else { "krylov" },
        "hermiticity_residual": herm,
        "max_norm_drift": psi.max_norm_drift(),
        "renormalizations": psi.renormalizations(),
        "final_norm": psi.norm(),
    });
    Ok(RunOutput {
        directory: directory.to_path_buf(),
        times,
        states: None,
        summary: Some(rows),
        invariants,
    })
}

enum CmeStepper {
    /// Materialized exp(δL) (small grids).
    Dense(ndarray::Array2<f64>),
    /// Krylov exponential action per step.
    Krylov,
    /// Forward Euler (CFL-checked once up front).
    Euler,
}

fn run_cme(config: &ExperimentConfig, directory: &Path) -> Result<RunOutput, RunError> {
    let times = sample_times(config);
    let start = start_state(&config.model)?;
    let grid = build_grid(config.grid.as_ref().expect("validated"))?;
    let flow = model_flow(&config.model);
    let markov: MarkovGenerator = match grid.dim() {
        1 => assemble_cme_1d(&grid, &flow).map_err(numerical)?,
        _ => assemble_cme_2d(&grid, &flow).map_err(numerical)?,
    };
    let column_residual = markov
        .matrix()
        .column_sums()
        .iter()
        .fold(0.0f64, |acc, &s| acc.max(s.abs()));
    let euler = config.method == MethodKind::CmeEuler;
    let cfl_product = config.delta * markov.max_rate();
    let stepper = if euler {
        if cfl_product > 1.0 {
            return Err(RunError::Numerical(format!(
                "CFL violation: δ·max rate = {cfl_product:.3} > 1 (stable δ ≤ {:.3e})",
                markov.stable_step()
            )));
        }
        CmeStepper::Euler
    } else {
        let dense = match config.propagator.unwrap_or_default() {
            PropagatorConfig::Dense => true,
            PropagatorConfig::Krylov => false,
            PropagatorConfig::Auto => markov.nodes() <= linrep::kvn::DENSE_NODE_LIMIT,
        };
        if dense {
            let scaled = markov.matrix().to_dense().mapv(|v| v * config.delta);
            CmeStepper::Dense(expm(&scaled).map_err(numerical)?)
        } else {
            CmeStepper::Krylov
        }
    };
    let mut p = match config.initial.expect("validated") {
        InitialConfig::Delta => ProbabilityVector::delta(&grid, &start).map_err(numerical)?,
        InitialConfig::Gaussian { support_points } => {
            // Same profile as the wave method's initial state: the squared
            // Gaussian window, normalized to unit mass.
            let psi = gaussian_initial(&grid, &start, support_points).map_err(numerical)?;
            ProbabilityVector::from_unnormalized(psi.born_density()).map_err(numerical)?
        }
    };
    let references = if config.epsilons.is_empty() {
        None
    } else {
        Some(reference_points(&config.model, &start, &times)?)
    };
    let mut heatmap = HeatmapWriter::create(directory, &grid, config.heatmap_stride)?;
    let mut rows = Vec::with_capacity(times.len());
    let mut mass_drift = 0.0f64;
    let mut scratch = vec![0.0; grid.total_points()];
    for (step, &t) in times.iter().enumerate() {
        mass_drift = mass_drift.max((p.total_mass() - 1.0).abs());
        let x_ref = references.as_ref().map(|r| r[step].as_slice());
        rows.push(diagnostics::summarize(
            p.values(),
            &grid,
            t,
            x_ref,
            &config.epsilons,
        ));
        heatmap.maybe_write(step, t, p.values())?;
        if step < config.steps {
            p = match &stepper {
                CmeStepper::Dense(u) => {
                    for (out, row) in scratch.iter_mut().zip(u.rows()) {
                        *out = row
                            .iter()
                            .zip(p.values())
                            .map(|(&a, &b)| a * b)
                            .sum::<f64>();
                    }
                    ProbabilityVector::from_unnormalized(scratch.clone()).map_err(numerical)?
                }
                CmeStepper::Krylov => propagate_cme(&markov, &p, config.delta, 1,
                        CmeMethod::Exponential)
                    .map_err(numerical)?
                    .pop()
                    .expect("one step requested"),
                CmeStepper::Euler => propagate_cme(&markov, &p, config.delta, 1,
                        CmeMethod::ForwardEuler)
                    .map_err(numerical)?
                    .pop()
                    .expect("one step requested"),
            };
        }
    }
    write_summary_csv_file(directory, &rows, grid.dim(), &config.epsilons)?;
    let invariants = json!({
        "stepper": match &stepper {
            CmeStepper::Dense(_) => "dense_exponential",
            CmeStepper::Krylov => "krylov_exponential",
            CmeStepper::Euler => "forward_euler",
        },
        "column_sum_residual": column_residual,
        "mass_drift": mass_drift,
        "cfl_product": cfl_product,
        "generator_nonzeros": markov.matrix().nnz(),
    });
    Ok(RunOutput {
        directory: directory.to_path_buf(),
        times,
        states: None,
        summary: Some(rows),
        invariants,
    })
}
