//! Discrete weighted measures and functions on a uniform grid.
//!
//! Measures are stored as cell masses, functions as values at cell centers.
//! The pairing between them is the plain dot product, which keeps the left
//! action of a discrete semigroup the exact transpose of its right action.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform partition of `[lower, upper]` into `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    lower: f64,
    upper: f64,
    n_cells: usize,
}

impl Grid1D {
    pub fn new(lower: f64, upper: f64, n_cells: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return invalid(format!("grid bounds must satisfy lower < upper, got [{lower}, {upper}]"));
        }
        if n_cells < 2 {
            return invalid(format!("grid needs at least 2 cells, got {n_cells}"));
        }
        Ok(Self { lower, upper, n_cells })
    }

    /// Symmetric grid `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n_cells: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n_cells)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.n_cells
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.upper - self.lower) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    /// Index of the cell containing `x`, if any.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if x < self.lower || x > self.upper {
            return None;
        }
        let i = ((x - self.lower) / self.dx()).floor() as usize;
        Some(i.min(self.n_cells - 1))
    }

    /// Index of the cell whose center is closest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let t = ((x - self.lower) / self.dx() - 0.5).round();
        t.clamp(0.0, (self.n_cells - 1) as f64) as usize
    }

    /// Cells whose centers lie in the closed window `[a, b]`.
    pub fn cells_in(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let dx = self.dx();
        let first = ((a - self.lower) / dx - 0.5).ceil().max(0.0) as usize;
        let last = ((b - self.lower) / dx - 0.5).floor();
        if last < 0.0 {
            return 0..0;
        }
        let end = (last as usize + 1).min(self.n_cells);
        first.min(end)..end
    }

    fn ensure_same(&self, other: &Grid1D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Pointwise values at cell centers; a discrete element of `B(V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid1D,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("expected {} values, got {}", grid.len(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite function value at cell {i}"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.centers().into_iter().map(f).collect())
    }

    pub fn constant(grid: Grid1D, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Signed cell masses; a discrete element of `M(V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    grid: Grid1D,
    masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(grid: Grid1D, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.len() {
            return invalid(format!("expected {} masses, got {}", grid.len(), masses.len()));
        }
        if let Some(i) = masses.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite mass at cell {i}"));
        }
        Ok(Self { grid, masses })
    }

    pub fn zero(grid: Grid1D) -> Self {
        Self { grid, masses: vec![0.0; grid.len()] }
    }

    /// Unit mass in the cell containing `x`.
    pub fn dirac(grid: Grid1D, x: f64) -> Result<Self> {
        let i = grid
            .cell_of(x)
            .ok_or_else(|| Error::InvalidInput(format!("point {x} outside grid")))?;
        let mut masses = vec![0.0; grid.len()];
        masses[i] = 1.0;
        Ok(Self { grid, masses })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn into_masses(self) -> Vec<f64> {
        self.masses
    }

    /// Cellwise Hahn-Jordan split `(mu_plus, mu_minus)`.
    pub fn jordan_parts(&self) -> (DiscreteMeasure, DiscreteMeasure) {
        let plus = self.masses.iter().map(|m| m.max(0.0)).collect();
        let minus = self.masses.iter().map(|m| (-m).max(0.0)).collect();
        (
            Self { grid: self.grid, masses: plus },
            Self { grid: self.grid, masses: minus },
        )
    }

    pub fn total_variation(&self) -> f64 {
        self.masses.iter().map(|m| m.abs()).sum()
    }
}

/// Strictly positive weight function `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    grid: Grid1D,
    values: Vec<f64>,
}

impl Weight {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("expected {} weights, got {}", grid.len(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return invalid(format!("weight must be positive and finite, cell {i} has {}", values[i]));
        }
        Ok(Self { grid, values })
    }

    /// `V = 1`.
    pub fn unit(grid: Grid1D) -> Self {
        Self { grid, values: vec![1.0; grid.len()] }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `mu(f) = sum_i mass_i f(x_i)`.
pub fn pair(mu: &DiscreteMeasure, f: &GridFunction) -> Result<f64> {
    mu.grid.ensure_same(&f.grid)?;
    Ok(dot(&mu.masses, &f.values))
}

/// `sup_i |f(x_i)| / V(x_i)`.
pub fn weighted_function_norm(f: &GridFunction, v: &Weight) -> Result<f64> {
    f.grid.ensure_same(&v.grid)?;
    Ok(sup_norm_weighted(&f.values, &v.values))
}

/// `sum_i |mass_i| V(x_i)`.
pub fn weighted_measure_norm(mu: &DiscreteMeasure, v: &Weight) -> Result<f64> {
    mu.grid.ensure_same(&v.grid)?;
    Ok(tv_norm_weighted(&mu.masses, &v.values))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sup_norm_weighted(f: &[f64], v: &[f64]) -> f64 {
    f.iter().zip(v).fold(0.0, |acc, (x, w)| acc.max(x.abs() / w))
}

pub(crate) fn tv_norm_weighted(mu: &[f64], v: &[f64]) -> f64 {
    mu.iter().zip(v).map(|(m, w)| m.abs() * w).sum()
}

pub(crate) fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub(crate) fn tv_norm(mu: &[f64]) -> f64 {
    mu.iter().map(|m| m.abs()).sum()
}

/// Probability measure on a time grid over `[0, horizon]`.
///
/// Atoms (level-zero families, hitting laws of deterministic chains) and
/// densities share the same representation: one mass per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeMeasure {
    horizon: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Density samples at the nodes when the measure is absolutely continuous.
    density: Option<Vec<f64>>,
}

impl TimeMeasure {
    /// Measure with the given node masses, renormalized to total mass one.
    pub fn from_weights(horizon: f64, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_time_nodes(horizon, &nodes)?;
        if weights.len() != nodes.len() {
            return invalid("one weight per time node required");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return invalid("time-measure weights must be finite and nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return invalid("time-measure has zero mass");
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { horizon, nodes, weights, density: None })
    }

    /// Absolutely continuous measure from density samples, trapezoid weights.
    pub fn from_density(horizon: f64, nodes: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if density.len() != nodes.len() {
            return invalid("one density sample per time node required");
        }
        let tw = trapezoid_weights(&nodes);
        let raw: Vec<f64> = tw.iter().zip(&density).map(|(w, d)| w * d).collect();
        let total: f64 = raw.iter().sum();
        let mut m = Self::from_weights(horizon, nodes, raw)?;
        m.density = Some(density.into_iter().map(|d| d / total).collect());
        Ok(m)
    }

    /// Unit atom at `nodes[index]`.
    pub fn dirac_on(horizon: f64, nodes: Vec<f64>, index: usize) -> Result<Self> {
        if index >= nodes.len() {
            return invalid("atom index outside the time grid");
        }
        let mut w = vec![0.0; nodes.len()];
        w[index] = 1.0;
        Self::from_weights(horizon, nodes, w)
    }

    /// Single atom at time `t` (a one-node grid).
    pub fn atom(t: f64) -> Result<Self> {
        Self::from_weights(t, vec![t], vec![1.0])
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn density(&self) -> Option<&[f64]> {
        self.density.as_deref()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `int g(s) sigma(ds)`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(s, w)| w * g(*s)).sum()
    }

    fn same_support(&self, other: &TimeMeasure) -> Result<()> {
        let same = self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        if same {
            Ok(())
        } else {
            Err(Error::GridMismatch("time measures live on different time grids".into()))
        }
    }

    /// Node masses of `self ∧ other`.
    pub fn overlap_weights(&self, other: &TimeMeasure) -> Result<Vec<f64>> {
        self.same_support(other)?;
        Ok(self.weights.iter().zip(&other.weights).map(|(a, b)| a.min(*b)).collect())
    }
}

/// `sum_j |w1_j - w2_j|` for two measures on the same time grid.
pub fn tv_distance_time_measures(s1: &TimeMeasure, s2: &TimeMeasure) -> Result<f64> {
    s1.same_support(s2)?;
    Ok(s1.weights.iter().zip(&s2.weights).map(|(a, b)| (a - b).abs()).sum())
}

fn check_time_nodes(horizon: f64, nodes: &[f64]) -> Result<()> {
    if nodes.is_empty() {
        return invalid("time grid is empty");
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return invalid("time horizon must be finite and nonnegative");
    }
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("time nodes must be strictly increasing");
    }
    let tol = 1e-12 * (1.0 + horizon);
    if nodes[0] < -tol || nodes[nodes.len() - 1] > horizon + tol {
        return invalid("time nodes must lie in [0, horizon]");
    }
    Ok(())
}

/// Uniform grid of `n` nodes over `[0, t]`.
pub fn uniform_time_nodes(t: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![t];
    }
    (0..n).map(|j| t * j as f64 / (n - 1) as f64).collect()
}

/// Trapezoid weights for (possibly nonuniform) nodes.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    if n == 1 {
        w[0] = 1.0;
        return w;
    }
    for j in 0..n - 1 {
        let h = nodes[j + 1] - nodes[j];
        w[j] += 0.5 * h;
        w[j + 1] += 0.5 * h;
    }
    w
}
