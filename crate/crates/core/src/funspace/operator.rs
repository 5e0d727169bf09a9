use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

use super::grid::{Grid, GridFunction, NormKind, SharedGrid};

/// A discretized kernel operator `(Af)(t_i) = Σ_j K(t_i, s_j) w_j f(s_j)`.
///
/// The kernel matrix alone does not determine the operator: application always
/// goes through the quadrature weights. In particular the identity operator is
/// NOT the identity matrix but `diag(1/w_j)`, so that weighting cancels.
#[derive(Debug, Clone)]
pub struct LinearOp {
    grid: SharedGrid,
    kernel: DMatrix<f64>,
}

impl LinearOp {
    pub fn new(grid: SharedGrid, kernel: DMatrix<f64>) -> Result<Self> {
        let m = grid.len();
        if kernel.nrows() != m || kernel.ncols() != m {
            return Err(Error::InvalidArgument(format!(
                "kernel is {}x{} on a grid of size {m}",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("kernel entries must be finite".into()));
        }
        Ok(LinearOp { grid, kernel })
    }

    /// Builds the kernel by evaluating `k(t, s)` at node pairs.
    pub fn from_fn(grid: SharedGrid, k: impl Fn(f64, f64) -> f64) -> Self {
        let pts = grid.points().to_vec();
        let m = pts.len();
        let kernel = DMatrix::from_fn(m, m, |i, j| k(pts[i], pts[j]));
        LinearOp { grid, kernel }
    }

    pub fn zero(grid: SharedGrid) -> Self {
        let m = grid.len();
        LinearOp {
            grid,
            kernel: DMatrix::zeros(m, m),
        }
    }

    /// The quadrature identity: kernel `diag(1/w_j)`.
    pub fn identity(grid: SharedGrid) -> Self {
        let m = grid.len();
        let w = grid.weights().to_vec();
        LinearOp {
            grid,
            kernel: DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 / w[i] } else { 0.0 }),
        }
    }

    pub fn scaled_identity(grid: SharedGrid, c: f64) -> Self {
        LinearOp::identity(grid).scale(c)
    }

    pub fn grid(&self) -> &SharedGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// Quadrature application; linear in `f`.
    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        Grid::check_same(&self.grid, f.grid())?;
        Ok(GridFunction::from_vector(
            self.grid.clone(),
            self.apply_vector(f.vector()),
        ))
    }

    pub(crate) fn apply_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        let w = self.grid.weights();
        let weighted = DVector::from_iterator(v.len(), v.iter().zip(w).map(|(x, &wk)| wk * x));
        &self.kernel * weighted
    }

    /// Quadrature composition: `K_AB(t,s) = Σ_j K_A(t,u_j) w_j K_B(u_j,s)`.
    pub fn compose(&self, other: &LinearOp) -> Result<LinearOp> {
        Grid::check_same(&self.grid, &other.grid)?;
        let mut weighted_b = other.kernel.clone();
        for (j, &wj) in self.grid.weights().iter().enumerate() {
            weighted_b.row_mut(j).scale_mut(wj);
        }
        Ok(LinearOp {
            grid: self.grid.clone(),
            kernel: &self.kernel * weighted_b,
        })
    }

    pub fn add(&self, other: &LinearOp) -> Result<LinearOp> {
        Grid::check_same(&self.grid, &other.grid)?;
        Ok(LinearOp {
            grid: self.grid.clone(),
            kernel: &self.kernel + &other.kernel,
        })
    }

    pub fn sub(&self, other: &LinearOp) -> Result<LinearOp> {
        Grid::check_same(&self.grid, &other.grid)?;
        Ok(LinearOp {
            grid: self.grid.clone(),
            kernel: &self.kernel - &other.kernel,
        })
    }

    pub fn scale(&self, c: f64) -> LinearOp {
        LinearOp {
            grid: self.grid.clone(),
            kernel: &self.kernel * c,
        }
    }

    /// The kernel conjugated into the weighted geometry,
    /// `W^{1/2} K W^{1/2}`. Spectral quantities of the operator acting on the
    /// weighted `L^2` space are spectral quantities of this matrix.
    pub fn weighted_matrix(&self) -> DMatrix<f64> {
        let sqrt_w: Vec<f64> = self.grid.weights().iter().map(|w| w.sqrt()).collect();
        let m = self.grid.len();
        DMatrix::from_fn(m, m, |i, j| sqrt_w[i] * self.kernel[(i, j)] * sqrt_w[j])
    }

    /// Operator norm.
    ///
    /// Exact for `Lp(2)` (largest singular value in the weighted geometry),
    /// `Lp(1)` (max weighted column sum) and `Sup` (max weighted row sum).
    /// Other exponents fall back to a probe-dictionary estimate, a lower bound
    /// that is monotone in the dictionary size; see [`LinearOp::norm_estimate`].
    pub fn norm(&self, kind: NormKind) -> f64 {
        let w = self.grid.weights();
        match kind {
            NormKind::Lp(p) if p == 2.0 => {
                let svd = self.weighted_matrix().svd(false, false);
                svd.singular_values.iter().fold(0.0f64, |a, &s| a.max(s))
            }
            NormKind::Lp(p) if p == 1.0 => (0..self.grid.len())
                .map(|k| {
                    self.kernel
                        .column(k)
                        .iter()
                        .zip(w)
                        .map(|(v, &wi)| wi * v.abs())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max),
            NormKind::Sup => (0..self.grid.len())
                .map(|i| {
                    self.kernel
                        .row(i)
                        .iter()
                        .zip(w)
                        .map(|(v, &wj)| v.abs() * wj)
                        .sum::<f64>()
                })
                .fold(0.0, f64::max),
            NormKind::Lp(p) => {
                assert!(p >= 1.0, "Lp norm requires p >= 1");
                self.norm_estimate(kind, 32)
            }
        }
    }

    /// Probe-dictionary estimate of `sup ‖Af‖ / ‖f‖`: a fixed dictionary of
    /// smooth probes plus `n_random` pseudo-random ones drawn from an internal
    /// constant seed. Returns a lower bound that grows with `n_random`.
    pub fn norm_estimate(&self, kind: NormKind, n_random: usize) -> f64 {
        let grid = &self.grid;
        let mut probes: Vec<GridFunction> = vec![
            GridFunction::constant(grid.clone(), 1.0),
            GridFunction::from_fn(grid.clone(), |t| t),
            GridFunction::from_fn(grid.clone(), |t| t * t),
            GridFunction::from_fn(grid.clone(), |t| (2.0 * std::f64::consts::PI * t).cos()),
            GridFunction::from_fn(grid.clone(), |t| (2.0 * std::f64::consts::PI * t).sin()),
            GridFunction::from_fn(grid.clone(), |t| (4.0 * std::f64::consts::PI * t).cos()),
        ];
        // Weighted deltas reach the extreme points of the L1 ball.
        for k in 0..grid.len() {
            let mut v = vec![0.0; grid.len()];
            v[k] = 1.0;
            probes.push(GridFunction::from_vector(grid.clone(), DVector::from_vec(v)));
        }
        let mut rng = rng::stream(0x6e6f_726d, 0);
        for _ in 0..n_random {
            let v = DVector::from_iterator(
                grid.len(),
                (0..grid.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
            );
            probes.push(GridFunction::from_vector(grid.clone(), v));
        }
        // Sign patterns also help the sup norm.
        probes.push(GridFunction::from_fn(grid.clone(), |t| {
            if t < 0.5 {
                1.0
            } else {
                -1.0
            }
        }));

        let mut best = 0.0f64;
        for f in &probes {
            let denom = f.norm(kind);
            if denom == 0.0 {
                continue;
            }
            let image = self.apply(f).expect("probe lives on the operator grid");
            best = best.max(image.norm(kind) / denom);
        }
        best
    }
}
