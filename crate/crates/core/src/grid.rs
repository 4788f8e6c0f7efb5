//! Time discretization primitives: uniform grids on `[0, T]`, grid-sampled
//! curves, bounded-variation paths and discrete Stieltjes sums.
//!
//! Every other module works on these types. Grids are uniform by design:
//! all downstream formulas are running extrema over nodes, so non-uniform
//! support would buy nothing.

use crate::error::{Error, Result};
use std::sync::Arc;

/// Uniform partition of `[0, T]` into `n_steps` intervals (`n_steps + 1` nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
    nodes: Vec<f64>,
}

/// Uniform grid of `[0, T]`. Fails on non-positive `T` or zero steps.
pub fn make_grid(horizon: f64, n_steps: usize) -> Result<Arc<TimeGrid>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "time horizon must be positive and finite, got {horizon}"
        )));
    }
    if n_steps < 1 {
        return Err(Error::InvalidInput("n_steps must be >= 1".into()));
    }
    let dt = horizon / n_steps as f64;
    let mut nodes: Vec<f64> = (0..=n_steps).map(|i| i as f64 * dt).collect();
    nodes[0] = 0.0;
    nodes[n_steps] = horizon;
    Ok(Arc::new(TimeGrid {
        horizon,
        n_steps,
        nodes,
    }))
}

impl TimeGrid {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Index of a grid node equal to `t` (within rounding), or an error for
    /// off-grid times.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        let i = (t / dt).round() as i64;
        if i < 0 || i > self.n_steps as i64 {
            return Err(Error::InvalidInput(format!("time {t} outside [0, {}]", self.horizon)));
        }
        let i = i as usize;
        if (self.nodes[i] - t).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(Error::InvalidInput(format!("time {t} is not a grid node")));
        }
        Ok(i)
    }

    pub fn same_grid(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps
            && (self.horizon - other.horizon).abs() <= 1e-12 * self.horizon.max(1.0)
    }
}

/// Regularity tag for a grid-sampled curve. A continuous curve reports its
/// own value as left limit; a cadlag curve is read as piecewise constant on
/// `[t_i, t_{i+1})`, so its left limit at `t_i` is the previous node value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularity {
    Continuous,
    Cadlag,
}

/// Deterministic real function sampled on the time grid.
#[derive(Debug, Clone)]
pub struct GridCurve {
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
    regularity: Regularity,
}

impl GridCurve {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<f64>, regularity: Regularity) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "curve has {} values for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("curve contains a non-finite value".into()));
        }
        Ok(GridCurve {
            grid,
            values,
            regularity,
        })
    }

    pub fn from_fn(grid: Arc<TimeGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        GridCurve::new(grid, values, Regularity::Continuous)
    }

    pub fn constant(grid: Arc<TimeGrid>, c: f64) -> Result<Self> {
        GridCurve::new(grid.clone(), vec![c; grid.len()], Regularity::Continuous)
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    /// Left limit at node `i` under the curve's regularity convention.
    pub fn left_limit(&self, i: usize) -> f64 {
        match self.regularity {
            Regularity::Continuous => self.values[i],
            Regularity::Cadlag => self.values[i.saturating_sub(1)],
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Path of bounded variation on the grid, stored by signed increments.
/// Increment `i` (0-based, `i = 0..n_steps`) is attributed to `(t_i, t_{i+1}]`,
/// and the path starts at zero.
#[derive(Debug, Clone)]
pub struct BVPath {
    grid: Arc<TimeGrid>,
    increments: Vec<f64>,
}

impl BVPath {
    pub fn new(grid: Arc<TimeGrid>, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.n_steps() {
            return Err(Error::InvalidInput(format!(
                "path has {} increments for a grid with {} steps",
                increments.len(),
                grid.n_steps()
            )));
        }
        if increments.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("path contains a non-finite increment".into()));
        }
        Ok(BVPath { grid, increments })
    }

    pub fn zero(grid: Arc<TimeGrid>) -> Self {
        let n = grid.n_steps();
        BVPath {
            grid,
            increments: vec![0.0; n],
        }
    }

    /// Builds the path from its node values; `values[0]` must be 0.
    pub fn from_values(grid: Arc<TimeGrid>, values: &[f64]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput("value count does not match grid".into()));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidInput("a BV path must start at zero".into()));
        }
        let increments = values.windows(2).map(|w| w[1] - w[0]).collect();
        BVPath::new(grid, increments)
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Increment over `(t_{i-1}, t_i]`, for node index `i >= 1`.
    pub fn increment_at(&self, i: usize) -> f64 {
        self.increments[i - 1]
    }

    /// Path value at node `i` (`k_0 = 0`).
    pub fn value(&self, i: usize) -> f64 {
        self.increments[..i].iter().sum()
    }

    /// Node values `k_{t_0}, ..., k_{t_N}`.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = 0.0;
        out.push(acc);
        for dk in &self.increments {
            acc += dk;
            out.push(acc);
        }
        out
    }

    /// Total variation accumulated up to node `i`.
    pub fn total_variation_at(&self, i: usize) -> f64 {
        self.increments[..i].iter().map(|dk| dk.abs()).sum()
    }
}

/// Total variation `|k|_t` at a grid time `t`; `t` must be a node.
pub fn total_variation(k: &BVPath, t: f64) -> Result<f64> {
    let i = k.grid().index_of(t)?;
    Ok(k.total_variation_at(i))
}

/// Discrete Stieltjes sum with the right-endpoint convention:
/// `sum_i f(t_i) * dk_i` where `dk_i` is the increment over `(t_{i-1}, t_i]`.
pub fn stieltjes_sum(f: &GridCurve, k: &BVPath) -> Result<f64> {
    if !f.grid().same_grid(k.grid()) {
        return Err(Error::InvalidInput("curve and path live on different grids".into()));
    }
    Ok(f
        .values()
        .iter()
        .skip(1)
        .zip(k.increments())
        .map(|(fv, dk)| fv * dk)
        .sum())
}

/// Largest partial Stieltjes sum `max_{s <= t} sum_{s < t_i <= t} f(t_i) dk_i`,
/// evaluated over all node pairs via prefix sums. This is the quantity the
/// minimality conditions bound from above (forward convention: the increment
/// over `(t_{i-1}, t_i]` pairs with the right node, where a forward running
/// extremum binds).
pub fn max_partial_stieltjes(f_at_nodes: &[f64], increments: &[f64]) -> f64 {
    max_partial_sum(f_at_nodes, increments, false)
}

/// Left-endpoint variant: the increment over `(t_{i-1}, t_i]` pairs with the
/// node `t_{i-1}`. Backward-constructed regulators act at the left node, and
/// this pairing is the grid transcription of the left limits in their
/// minimality condition.
pub fn max_partial_stieltjes_left(f_at_nodes: &[f64], increments: &[f64]) -> f64 {
    max_partial_sum(f_at_nodes, increments, true)
}

fn max_partial_sum(f_at_nodes: &[f64], increments: &[f64], left: bool) -> f64 {
    debug_assert_eq!(f_at_nodes.len(), increments.len() + 1);
    let mut prefix = 0.0;
    let mut min_prefix = 0.0;
    let mut best = f64::NEG_INFINITY;
    for (i, dk) in increments.iter().enumerate() {
        let f = if left { f_at_nodes[i] } else { f_at_nodes[i + 1] };
        prefix += f * dk;
        best = best.max(prefix - min_prefix);
        min_prefix = min_prefix.min(prefix);
    }
    // The degenerate pair s = t contributes an empty sum.
    best.max(0.0)
}

/// Two-sided barrier pair with a strictly positive gap.
#[derive(Debug, Clone)]
pub struct Band {
    lower: GridCurve,
    upper: GridCurve,
}

impl Band {
    pub fn new(lower: GridCurve, upper: GridCurve) -> Result<Self> {
        if !lower.grid().same_grid(upper.grid()) {
            return Err(Error::InvalidInput("barriers live on different grids".into()));
        }
        let band = Band { lower, upper };
        if !(band.gap() > 0.0) {
            return Err(Error::InvalidInput(format!(
                "barrier gap must be strictly positive, got {}",
                band.gap()
            )));
        }
        Ok(band)
    }

    pub fn lower(&self) -> &GridCurve {
        &self.lower
    }

    pub fn upper(&self) -> &GridCurve {
        &self.upper
    }

    /// `min_t (u_t - l_t)` over the grid nodes.
    pub fn gap(&self) -> f64 {
        self.lower
            .values()
            .iter()
            .zip(self.upper.values())
            .map(|(l, u)| u - l)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        self.lower.grid()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_grid_uniform_partition() {
        let g = make_grid(1.0, 4).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = make_grid(2.0, 1).unwrap();
        assert_eq!(g.nodes(), &[0.0, 2.0]);
    }

    #[test]
    fn make_grid_rejects_bad_input() {
        assert!(make_grid(0.0, 4).is_err());
        assert!(make_grid(-1.0, 4).is_err());
        assert!(make_grid(1.0, 0).is_err());
    }

    #[test]
    fn grid_spacing_is_uniform() {
        let g = make_grid(std::f64::consts::PI, 7).unwrap();
        let dt = g.dt();
        for w in g.nodes().windows(2) {
            assert!((w[1] - w[0] - dt).abs() <= f64::EPSILON * 4.0 * dt.abs().max(1.0));
        }
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(7), std::f64::consts::PI);
    }

    #[test]
    fn stieltjes_telescopes_for_unit_integrand() {
        let g = make_grid(1.0, 4).unwrap();
        let one = GridCurve::constant(g.clone(), 1.0).unwrap();
        let k = BVPath::new(g.clone(), vec![1.0, 0.5, 1.0, 0.5]).unwrap();
        assert_eq!(stieltjes_sum(&one, &k).unwrap(), 3.0);
        let zero = GridCurve::constant(g.clone(), 0.0).unwrap();
        assert_eq!(stieltjes_sum(&zero, &k).unwrap(), 0.0);
    }

    #[test]
    fn stieltjes_hand_sum() {
        let g = make_grid(1.0, 2).unwrap();
        let f = GridCurve::from_fn(g.clone(), |t| t).unwrap();
        let k = BVPath::new(g.clone(), vec![1.0, -1.0]).unwrap();
        // 0.5 * 1 + 1.0 * (-1) = -0.5
        assert!((stieltjes_sum(&f, &k).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn stieltjes_rejects_grid_mismatch() {
        let g1 = make_grid(1.0, 2).unwrap();
        let g2 = make_grid(1.0, 3).unwrap();
        let f = GridCurve::constant(g1, 1.0).unwrap();
        let k = BVPath::zero(g2);
        assert!(stieltjes_sum(&f, &k).is_err());
    }

    #[test]
    fn total_variation_hand_cases() {
        let g = make_grid(1.0, 2).unwrap();
        let k = BVPath::new(g.clone(), vec![1.0, -1.0]).unwrap();
        assert_eq!(total_variation(&k, 1.0).unwrap(), 2.0);
        assert_eq!(total_variation(&k, 0.5).unwrap(), 1.0);
        assert_eq!(total_variation(&k, 0.0).unwrap(), 0.0);
        let z = BVPath::zero(g.clone());
        assert_eq!(total_variation(&z, 1.0).unwrap(), 0.0);

        let g3 = make_grid(1.5, 3).unwrap();
        let k3 = BVPath::new(g3, vec![0.5, 0.5, -0.25]).unwrap();
        assert_eq!(k3.total_variation_at(3), 1.25);
    }

    #[test]
    fn total_variation_rejects_off_grid() {
        let g = make_grid(1.0, 2).unwrap();
        let k = BVPath::zero(g);
        assert!(total_variation(&k, 0.3).is_err());
        assert!(total_variation(&k, 1.2).is_err());
    }

    #[test]
    fn band_requires_positive_gap() {
        let g = make_grid(1.0, 4).unwrap();
        let l = GridCurve::constant(g.clone(), 0.0).unwrap();
        let u = GridCurve::constant(g.clone(), 0.0).unwrap();
        assert!(Band::new(l, u).is_err());
        let l = GridCurve::constant(g.clone(), -1.0).unwrap();
        let u = GridCurve::from_fn(g.clone(), |t| 1.0 - t).unwrap();
        let band = Band::new(l, u).unwrap();
        assert!((band.gap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cadlag_left_limits_shift_by_one_node() {
        let g = make_grid(1.0, 2).unwrap();
        let c = GridCurve::new(g.clone(), vec![1.0, 2.0, 3.0], Regularity::Cadlag).unwrap();
        assert_eq!(c.left_limit(0), 1.0);
        assert_eq!(c.left_limit(1), 1.0);
        assert_eq!(c.left_limit(2), 2.0);
        let c = GridCurve::new(g, vec![1.0, 2.0, 3.0], Regularity::Continuous).unwrap();
        assert_eq!(c.left_limit(2), 3.0);
    }

    #[test]
    fn variation_dominates_displacement() {
        let g = make_grid(1.0, 5).unwrap();
        let k = BVPath::new(g, vec![0.4, -0.3, 0.0, 1.2, -0.1]).unwrap();
        let vals = k.values();
        for s in 0..vals.len() {
            for t in s..vals.len() {
                let disp = (vals[t] - vals[s]).abs();
                let tv = k.total_variation_at(t) - k.total_variation_at(s);
                assert!(disp <= tv + 1e-15);
            }
        }
    }
}
