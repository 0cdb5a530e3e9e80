//! Experiment configuration: one JSON document per run.
//!
//! A config names a model, a solver method, and the numerical knobs the
//! method needs. Validation is strict in both directions: every field a
//! method requires must be present, and fields a method cannot use are
//! rejected, so a config never silently ignores part of itself.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("config field `{field}`: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field,
        message: message.into(),
    }
}

/// Which dynamical system the experiment runs on.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// ẋ = −x², analytic solution x0/(1 + x0·t).
    Decay { x0: f64 },
    /// Van der Pol: ẋ = y, ẏ = −x + µ(1−x²)y. With `warm_up` (default
    /// true) the run starts from the point reached from (2,0) after 100
    /// time units — a point on the limit cycle.
    Vdp {
        mu: f64,
        #[serde(default = "default_true")]
        warm_up: bool,
    },
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn dim(&self) -> usize {
        match self {
            ModelConfig::Decay { .. } => 1,
            ModelConfig::Vdp { .. } => 2,
        }
    }
}

/// Solver method. Observable methods emit `trajectory.csv`; grid methods
/// emit `summary.csv` and `heatmap.csv`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    /// Truncated monomial lifting integrated as a linear ODE.
    CarlemanTruncation,
    /// Least-squares projected propagator fitted on reference data.
    EdmdProjection,
    /// Wave-mechanics transport of |ψ|² on a grid.
    Kvn,
    /// Jump-process density evolution, exponential stepping.
    CmeExponential,
    /// Jump-process density evolution, forward-Euler stepping (CFL-bound).
    CmeEuler,
    /// Closed-form solution through the invariant observable (decay only).
    InvariantExact,
    /// High-accuracy adaptive integration of the original ODE.
    Reference,
}

impl MethodKind {
    pub fn is_grid_method(self) -> bool {
        matches!(
            self,
            MethodKind::Kvn | MethodKind::CmeExponential | MethodKind::CmeEuler
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::CarlemanTruncation => "carleman_truncation",
            MethodKind::EdmdProjection => "edmd_projection",
            MethodKind::Kvn => "kvn",
            MethodKind::CmeExponential => "cme_exponential",
            MethodKind::CmeEuler => "cme_euler",
            MethodKind::InvariantExact => "invariant_exact",
            MethodKind::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub low: f64,
    pub high: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x: AxisConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<AxisConfig>,
}

/// Initial distribution for grid methods, centered on the model's start
/// point (x0 for decay, the warmed-up cycle point for Van der Pol).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// All mass on the nearest grid node.
    Delta,
    /// Gaussian profile over a hard window of `support_points` nodes per
    /// axis (width σ = support·Δ/6).
    Gaussian { support_points: usize },
}

/// Propagator selection for exponential-stepping grid methods.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorConfig {
    Dense,
    Krylov,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub method: MethodKind,
    /// Step between output samples; δ·steps is the horizon.
    pub delta: f64,
    pub steps: usize,
    /// Output directory, joined under the output root (see
    /// `LINREP_OUTPUT_ROOT`) when relative.
    pub output: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    /// Truncation order (decay) / maximum total degree (Van der Pol) of the
    /// lifted monomial basis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    /// Maximum total degree of the projection dictionary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dictionary_degree: Option<u32>,
    /// Ridge weight for the projection fit (0 = plain least squares).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub tikhonov: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    /// Radii ε for the near-solution probability mass diagnostic.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propagator: Option<PropagatorConfig>,
    /// Write every n-th sample to heatmap.csv (default 1 = all samples).
    #[serde(default = "default_stride")]
    pub heatmap_stride: usize,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn default_stride() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| invalid("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Field-level validation: common constraints, then the method's
    /// required/forbidden field matrix.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(invalid("delta", "must be positive and finite"));
        }
        if self.steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        if self.output.as_os_str().is_empty() {
            return Err(invalid("output", "must not be empty"));
        }
        if self.heatmap_stride == 0 {
            return Err(invalid("heatmap_stride", "must be at least 1"));
        }
        match &self.model {
            ModelConfig::Decay { x0 } => {
                if !(*x0 > 0.0) {
                    return Err(invalid("model.x0", "must be positive for the decay model"));
                }
            }
            ModelConfig::Vdp { mu, .. } => {
                if !mu.is_finite() {
                    return Err(invalid("model.mu", "must be finite"));
                }
            }
        }
        for &eps in &self.epsilons {
            if !(eps > 0.0) {
                return Err(invalid("epsilons", "all radii must be positive"));
            }
        }
        if !(self.tikhonov >= 0.0) {
            return Err(invalid("tikhonov", "must be nonnegative"));
        }

        let grid_method = self.method.is_grid_method();
        self.require("grid", self.grid.is_some(), grid_method)?;
        self.require("initial", self.initial.is_some(), grid_method)?;
        self.require(
            "order",
            self.order.is_some(),
            self.method == MethodKind::CarlemanTruncation,
        )?;
        self.require(
            "dictionary_degree",
            self.dictionary_degree.is_some(),
            self.method == MethodKind::EdmdProjection,
        )?;
        if self.tikhonov != 0.0 && self.method != MethodKind::EdmdProjection {
            return Err(invalid(
                "tikhonov",
                format!("not used by method {}", self.method.name()),
            ));
        }
        if self.propagator.is_some()
            && !matches!(self.method, MethodKind::Kvn | MethodKind::CmeExponential)
        {
            return Err(invalid(
                "propagator",
                format!("not used by method {}", self.method.name()),
            ));
        }
        if !self.epsilons.is_empty() && !grid_method {
            return Err(invalid(
                "epsilons",
                format!("not used by method {}", self.method.name()),
            ));
        }

        if let Some(grid) = &self.grid {
            validate_axis("grid.x", &grid.x)?;
            match (self.model.dim(), &grid.y) {
                (1, None) => {}
                (1, Some(_)) => {
                    return Err(invalid("grid.y", "the decay model is one-dimensional"));
                }
                (2, Some(y)) => validate_axis("grid.y", y)?,
                (2, None) => {
                    return Err(invalid(
                        "grid.y",
                        "the Van der Pol model needs a second axis",
                    ));
                }
                _ => unreachable!(),
            }
        }
        if let Some(InitialConfig::Gaussian { support_points }) = self.initial {
            if support_points == 0 {
                return Err(invalid("initial.support_points", "must be at least 1"));
            }
        }
        match (self.method, &self.model) {
            (MethodKind::InvariantExact, ModelConfig::Vdp { .. }) => Err(invalid(
                "method",
                "invariant_exact has a closed form only for the decay model",
            )),
            (MethodKind::CarlemanTruncation, ModelConfig::Decay { .. }) => {
                if self.order == Some(0) {
                    Err(invalid("order", "must be at least 1 for the decay model"))
                } else {
                    Ok(())
                }
            }
            (MethodKind::CarlemanTruncation, ModelConfig::Vdp { .. }) => {
                if self.order.unwrap_or(0) < 3 {
                    Err(invalid(
                        "order",
                        "must be at least 3 for the Van der Pol model",
                    ))
                } else {
                    Ok(())
                }
            }
            (MethodKind::EdmdProjection, _) => {
                if self.dictionary_degree == Some(0) {
                    Err(invalid("dictionary_degree", "must be at least 1"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn require(
        &self,
        field: &'static str,
        present: bool,
        needed: bool,
    ) -> Result<(), ConfigError> {
        match (present, needed) {
            (false, true) => Err(invalid(
                field,
                format!("required by method {}", self.method.name()),
            )),
            (true, false) => Err(invalid(
                field,
                format!("not used by method {}", self.method.name()),
            )),
            _ => Ok(()),
        }
    }
}

fn validate_axis(field: &'static str, axis: &AxisConfig) -> Result<(), ConfigError> {
    if !(axis.low < axis.high) || !axis.low.is_finite() || !axis.high.is_finite() {
        return Err(invalid(field, "needs finite low < high"));
    }
    if axis.points < 2 {
        return Err(invalid(field, "needs at least 2 points"));
    }
    Ok(())
}
