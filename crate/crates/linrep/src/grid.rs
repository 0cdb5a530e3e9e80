//! Uniform phase-space grids shared by the grid-based solvers.
//!
//! Conventions, fixed once here so every consumer agrees:
//! - an axis with `points` nodes on [low, high) places node i at
//!   `low + i·Δ` with `Δ = (high − low) / points` (the right endpoint is
//!   excluded, matching the periodic wrap used by spectral derivatives);
//! - two-dimensional grids are flattened x-major: `flat = ix·ny + iy`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("axis needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("axis bounds must satisfy low < high, got [{low}, {high})")]
    EmptyInterval { low: f64, high: f64 },
    #[error("bounds must be finite, got [{low}, {high})")]
    NonFiniteBounds { low: f64, high: f64 },
}

/// One uniformly discretized coordinate axis on [low, high).
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    low: f64,
    high: f64,
    points: usize,
}

impl GridAxis {
    pub fn new(low: f64, high: f64, points: usize) -> Result<Self, GridError> {
        if !low.is_finite() || !high.is_finite() {
            return Err(GridError::NonFiniteBounds { low, high });
        }
        if low >= high {
            return Err(GridError::EmptyInterval { low, high });
        }
        if points < 2 {
            return Err(GridError::TooFewPoints(points));
        }
        Ok(Self { low, high, points })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Node spacing Δ = (high − low) / points.
    pub fn delta(&self) -> f64 {
        (self.high - self.low) / self.points as f64
    }

    /// Coordinate of node i (i may equal `points`, giving the wrap point).
    pub fn node(&self, i: usize) -> f64 {
        self.low + i as f64 * self.delta()
    }

    /// All node coordinates, length `points`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.node(i)).collect()
    }

    /// Index of the node nearest to x, clamped into the axis.
    pub fn nearest_node(&self, x: f64) -> usize {
        let raw = ((x - self.low) / self.delta()).round();
        if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(self.points - 1)
        }
    }

    /// Full width of the axis.
    pub fn span(&self) -> f64 {
        self.high - self.low
    }
}

/// A one- or two-dimensional uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<GridAxis>,
}

impl Grid {
    /// One-dimensional grid on [low, high) with `points` nodes.
    pub fn line(low: f64, high: f64, points: usize) -> Result<Self, GridError> {
        Ok(Self {
            axes: vec![GridAxis::new(low, high, points)?],
        })
    }

    /// Two-dimensional tensor grid, x-axis first.
    pub fn plane(x: GridAxis, y: GridAxis) -> Self {
        Self { axes: vec![x, y] }
    }

    /// Square two-dimensional grid with identical axes.
    pub fn square(low: f64, high: f64, points_per_axis: usize) -> Result<Self, GridError> {
        let axis = GridAxis::new(low, high, points_per_axis)?;
        Ok(Self::plane(axis.clone(), axis))
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> &GridAxis {
        &self.axes[k]
    }

    /// Total number of nodes across all axes.
    pub fn total_points(&self) -> usize {
        self.axes.iter().map(|a| a.points()).product()
    }

    /// Volume element: the product of axis spacings.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.delta()).product()
    }

    /// Flatten a multi-index; x-major in two dimensions (flat = ix·ny + iy).
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dim());
        match self.axes.len() {
            1 => multi[0],
            2 => multi[0] * self.axes[1].points() + multi[1],
            _ => unreachable!("grids are one- or two-dimensional"),
        }
    }

    /// Invert [`Self::flat_index`].
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        match self.axes.len() {
            1 => vec![flat],
            2 => {
                let ny = self.axes[1].points();
                vec![flat / ny, flat % ny]
            }
            _ => unreachable!("grids are one- or two-dimensional"),
        }
    }

    /// Coordinates of the node with the given flat index.
    pub fn node_coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, axis)| axis.node(i))
            .collect()
    }

    /// Flat index of the node nearest to the given point.
    pub fn nearest_flat_index(&self, point: &[f64]) -> usize {
        debug_assert_eq!(point.len(), self.dim());
        let multi: Vec<usize> = point
            .iter()
            .zip(&self.axes)
            .map(|(&x, axis)| axis.nearest_node(x))
            .collect();
        self.flat_index(&multi)
    }
}
