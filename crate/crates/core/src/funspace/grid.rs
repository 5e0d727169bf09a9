use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Grids are shared by reference; functions and operators hold an `Arc`.
pub type SharedGrid = Arc<Grid>;

/// A quadrature grid on `[0,1]`: strictly increasing nodes with positive
/// weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Composite midpoint rule with `m` equal cells.
    pub fn uniform(m: usize) -> Result<SharedGrid> {
        if m == 0 {
            return Err(Error::InvalidArgument("grid size m must be >= 1".into()));
        }
        let points = (0..m).map(|k| (k as f64 + 0.5) / m as f64).collect();
        let weights = vec![1.0 / m as f64; m];
        Ok(Arc::new(Grid { points, weights }))
    }

    /// Builds a grid from explicit nodes and weights, validating invariants.
    pub fn from_parts(points: Vec<f64>, weights: Vec<f64>) -> Result<SharedGrid> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "grid points and weights must be nonempty and equal length".into(),
            ));
        }
        for pair in points.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidArgument(
                    "grid points must be strictly increasing".into(),
                ));
            }
        }
        if points[0] < 0.0 || *points.last().unwrap() > 1.0 {
            return Err(Error::InvalidArgument("grid points must lie in [0,1]".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("grid weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "grid weights must sum to 1 (got {total})"
            )));
        }
        Ok(Arc::new(Grid { points, weights }))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when two handles refer to the same grid (pointer or content).
    pub fn same(a: &SharedGrid, b: &SharedGrid) -> bool {
        Arc::ptr_eq(a, b) || **a == **b
    }

    pub(crate) fn check_same(a: &SharedGrid, b: &SharedGrid) -> Result<()> {
        if Grid::same(a, b) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Which function-space norm to use.
///
/// `Lp(p)` is the quadrature `L^p` norm `(Σ w_k |f_k|^p)^{1/p}`; `Sup` is the
/// maximum over nodes. `Lp(2.0)` is the inner-product norm every exact
/// spectral computation in this crate relies on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    Lp(f64),
    Sup,
}

impl NormKind {
    pub const L1: NormKind = NormKind::Lp(1.0);
    pub const L2: NormKind = NormKind::Lp(2.0);
}

/// A function on `[0,1]` discretized on a quadrature grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: SharedGrid,
    values: DVector<f64>,
}

impl GridFunction {
    pub fn new(grid: SharedGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "function has {} values on a grid of size {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("function values must be finite".into()));
        }
        Ok(GridFunction {
            grid,
            values: DVector::from_vec(values),
        })
    }

    pub fn zero(grid: SharedGrid) -> Self {
        let m = grid.len();
        GridFunction {
            grid,
            values: DVector::zeros(m),
        }
    }

    pub fn constant(grid: SharedGrid, c: f64) -> Self {
        let m = grid.len();
        GridFunction {
            grid,
            values: DVector::from_element(m, c),
        }
    }

    /// Evaluates `f` at every grid node.
    pub fn from_fn(grid: SharedGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = DVector::from_iterator(grid.len(), grid.points().iter().map(|&t| f(t)));
        GridFunction { grid, values }
    }

    pub(crate) fn from_vector(grid: SharedGrid, values: DVector<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &SharedGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub(crate) fn vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::Sup => self.values.iter().fold(0.0, |acc, v| acc.max(v.abs())),
            NormKind::Lp(p) => {
                assert!(p >= 1.0, "Lp norm requires p >= 1");
                let w = self.grid.weights();
                if p == 2.0 {
                    self.values
                        .iter()
                        .zip(w)
                        .map(|(v, &wk)| wk * v * v)
                        .sum::<f64>()
                        .sqrt()
                } else {
                    self.values
                        .iter()
                        .zip(w)
                        .map(|(v, &wk)| wk * v.abs().powf(p))
                        .sum::<f64>()
                        .powf(1.0 / p)
                }
            }
        }
    }

    /// Weighted inner product `Σ w_k f_k g_k`.
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        Grid::check_same(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .zip(self.grid.weights())
            .map(|((a, b), &w)| w * a * b)
            .sum())
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        Grid::check_same(&self.grid, &other.grid)?;
        Ok(GridFunction {
            grid: self.grid.clone(),
            values: &self.values + &other.values,
        })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        Grid::check_same(&self.grid, &other.grid)?;
        Ok(GridFunction {
            grid: self.grid.clone(),
            values: &self.values - &other.values,
        })
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: &self.values * c,
        }
    }

    /// Rescales to unit norm under `kind`; zero functions are returned as-is.
    pub fn normalized(&self, kind: NormKind) -> GridFunction {
        let n = self.norm(kind);
        if n == 0.0 {
            self.clone()
        } else {
            self.scale(1.0 / n)
        }
    }
}
