//! Empirical mean and (cross-)covariance estimation.
//!
//! Covariance operators are kept in kernel coordinates: entry `(i, j)` is the
//! plain outer-product average `E[(X(t_i) - mu_i)(Y(t_j) - mu_j)]`. Quadrature
//! weights enter only through norms, traces and compositions (the weighted
//! geometry `W^{1/2} M W^{1/2}`); the rank-one nuclear-norm test pins this
//! convention down.

use nalgebra::{DMatrix, DVector};

use crate::coeffgen::OperatorSampler;
use crate::error::{Error, Result};
use crate::funspace::{Grid, GridFunction, LinearOp, NormKind, SharedGrid};
use crate::process::{simulate_recursive, BrcaModel, SimConfig, Trajectory};
use crate::rng::{self, Stream};

/// A discretized (cross-)covariance operator.
#[derive(Debug, Clone)]
pub struct CovOperator {
    grid: SharedGrid,
    matrix: DMatrix<f64>,
}

impl CovOperator {
    pub fn new(grid: SharedGrid, matrix: DMatrix<f64>) -> Result<Self> {
        let m = grid.len();
        if matrix.nrows() != m || matrix.ncols() != m {
            return Err(Error::InvalidArgument(format!(
                "covariance matrix is {}x{} on a grid of size {m}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "covariance entries must be finite".into(),
            ));
        }
        Ok(CovOperator { grid, matrix })
    }

    pub fn zero(grid: SharedGrid) -> Self {
        let m = grid.len();
        CovOperator {
            grid,
            matrix: DMatrix::zeros(m, m),
        }
    }

    /// Rank-one operator `f ⊗ g` (matrix `f_i g_j`).
    pub fn outer(f: &GridFunction, g: &GridFunction) -> Result<Self> {
        Grid::check_same(f.grid(), g.grid())?;
        let m = f.grid().len();
        let fv = f.values();
        let gv = g.values();
        Ok(CovOperator {
            grid: f.grid().clone(),
            matrix: DMatrix::from_fn(m, m, |i, j| fv[i] * gv[j]),
        })
    }

    pub fn grid(&self) -> &SharedGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn weighted(&self) -> DMatrix<f64> {
        let sw: Vec<f64> = self.grid.weights().iter().map(|w| w.sqrt()).collect();
        let m = self.grid.len();
        DMatrix::from_fn(m, m, |i, j| sw[i] * self.matrix[(i, j)] * sw[j])
    }

    /// Trace norm: sum of singular values in the weighted geometry.
    pub fn nuclear_norm(&self) -> f64 {
        self.weighted().svd(false, false).singular_values.iter().sum()
    }

    /// Largest singular value in the weighted geometry.
    pub fn operator_norm(&self) -> f64 {
        self.weighted()
            .svd(false, false)
            .singular_values
            .iter()
            .fold(0.0f64, |a, &s| a.max(s))
    }

    /// Trace in the weighted geometry, `Σ_k w_k M_kk`; for an auto-covariance
    /// this equals the expected squared norm.
    pub fn trace(&self) -> f64 {
        self.matrix
            .diagonal()
            .iter()
            .zip(self.grid.weights())
            .map(|(d, &w)| w * d)
            .sum()
    }

    /// Eigenvalues of the symmetrized weighted matrix, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let w = self.weighted();
        let sym = (&w + w.transpose()) * 0.5;
        let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eigs
    }

    /// Adjoint under the weighted inner product: the transposed kernel matrix.
    pub fn adjoint(&self) -> CovOperator {
        CovOperator {
            grid: self.grid.clone(),
            matrix: self.matrix.transpose(),
        }
    }

    pub fn add(&self, other: &CovOperator) -> Result<CovOperator> {
        Grid::check_same(&self.grid, &other.grid)?;
        Ok(CovOperator {
            grid: self.grid.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn sub(&self, other: &CovOperator) -> Result<CovOperator> {
        Grid::check_same(&self.grid, &other.grid)?;
        Ok(CovOperator {
            grid: self.grid.clone(),
            matrix: &self.matrix - &other.matrix,
        })
    }

    pub fn scale(&self, c: f64) -> CovOperator {
        CovOperator {
            grid: self.grid.clone(),
            matrix: &self.matrix * c,
        }
    }

    /// Variance of the probe functional `⟨·, g⟩_w` under this covariance:
    /// `gᵀ W M W g`.
    pub fn probe_variance(&self, probe: &GridFunction) -> Result<f64> {
        Grid::check_same(&self.grid, probe.grid())?;
        let w = self.grid.weights();
        let wg = DVector::from_iterator(
            w.len(),
            probe.values().iter().zip(w).map(|(g, &wk)| wk * g),
        );
        Ok((&wg.transpose() * &self.matrix * wg)[(0, 0)])
    }

    /// Image of the operator under `X ↦ ρX`: `(KW) M (KW)ᵀ` in kernel
    /// coordinates.
    pub fn conjugate_by(&self, op: &LinearOp) -> Result<CovOperator> {
        Grid::check_same(&self.grid, op.grid())?;
        let w = self.grid.weights();
        let m = self.grid.len();
        let kw = DMatrix::from_fn(m, m, |i, j| op.kernel()[(i, j)] * w[j]);
        Ok(CovOperator {
            grid: self.grid.clone(),
            matrix: &kw * &self.matrix * kw.transpose(),
        })
    }
}

/// Empirical lag covariances for `h = -h_max ..= h_max`.
#[derive(Debug, Clone)]
pub struct LagCovSeries {
    h_max: usize,
    covs: Vec<CovOperator>,
}

impl LagCovSeries {
    pub fn h_max(&self) -> usize {
        self.h_max
    }

    pub fn at(&self, h: i64) -> &CovOperator {
        &self.covs[(h + self.h_max as i64) as usize]
    }

    /// Plain sum over all lags.
    pub fn sum(&self) -> CovOperator {
        let mut acc = CovOperator::zero(self.covs[0].grid().clone());
        for c in &self.covs {
            acc = acc.add(c).expect("shared grid");
        }
        acc
    }
}

/// Sample mean `(1/n) Σ_{i=1..n} X_i` (the initial state is excluded).
pub fn sample_mean(traj: &Trajectory) -> GridFunction {
    let n = traj.len();
    let mut acc = DVector::<f64>::zeros(traj.grid().len());
    for i in 1..=n {
        acc += traj.state(i).vector();
    }
    GridFunction::from_vector(traj.grid().clone(), acc / n as f64)
}

/// Lag-`h` cross covariance
/// `(1/(n-|h|)) Σ_i (X_i - mean) ⊗ (X_{i+h} - mean)` over the states
/// `X_1 .. X_n`.
pub fn empirical_cross_cov(
    traj: &Trajectory,
    h: i64,
    mean: &GridFunction,
) -> Result<CovOperator> {
    let n = traj.len() as i64;
    if h.unsigned_abs() as i64 >= n {
        return Err(Error::InvalidArgument(format!(
            "lag |{h}| must be smaller than the path length {n}"
        )));
    }
    Grid::check_same(traj.grid(), mean.grid())?;
    let m = traj.grid().len();
    let mut acc = DMatrix::<f64>::zeros(m, m);
    let lo = 1.max(1 - h);
    let hi = n.min(n - h);
    for i in lo..=hi {
        let a = traj.state(i as usize).vector() - mean.vector();
        let b = traj.state((i + h) as usize).vector() - mean.vector();
        acc.ger(1.0, &a, &b, 1.0);
    }
    let count = (n - h.abs()) as f64;
    CovOperator::new(traj.grid().clone(), acc / count)
}

/// All lag covariances up to `h_max`.
pub fn lag_cov_series(traj: &Trajectory, h_max: usize, mean: &GridFunction) -> Result<LagCovSeries> {
    let mut covs = Vec::with_capacity(2 * h_max + 1);
    for h in -(h_max as i64)..=h_max as i64 {
        covs.push(empirical_cross_cov(traj, h, mean)?);
    }
    Ok(LagCovSeries { h_max, covs })
}

/// Truncated long-run covariance `Σ_{|h| <= h_max} Ĉ_h`.
pub fn longrun_cov(traj: &Trajectory, h_max: usize, mean: &GridFunction) -> Result<CovOperator> {
    Ok(lag_cov_series(traj, h_max, mean)?.sum())
}

/// Smallest lag budget `H` with `(E‖ρ‖)^H · x_second_moment < tol`, which
/// bounds the nuclear norm of every discarded cross covariance.
pub fn default_lag_budget(model: &BrcaModel, x_second_moment: f64, tol: f64) -> usize {
    let rate = model.op_sampler.norm_moment(1.0);
    if rate <= 0.0 || x_second_moment <= 0.0 {
        return 0;
    }
    let mut h = 0usize;
    let mut bound = x_second_moment;
    while bound >= tol && h < 10_000 {
        h += 1;
        bound *= rate;
    }
    h
}

/// Triangular lag weight `1 - |h|/n`.
pub fn bartlett_weight(h: i64, n: usize) -> f64 {
    1.0 - h.unsigned_abs() as f64 / n as f64
}

/// The triangular-weighted sum `Σ_{|h| <= n-1} (1 - |h|/n) Ĉ_h`, an estimate
/// of `n · Cov(X̄_n)`.
///
/// `mean` must be the model mean: centering at the sample mean collapses the
/// sum to zero identically.
pub fn bartlett_mean_cov(traj: &Trajectory, mean: &GridFunction) -> Result<CovOperator> {
    let n = traj.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "triangular-weighted covariance needs n >= 2".into(),
        ));
    }
    let series = lag_cov_series(traj, n - 1, mean)?;
    let mut acc = CovOperator::zero(traj.grid().clone());
    for h in -(n as i64 - 1)..=(n as i64 - 1) {
        acc = acc.add(&series.at(h).scale(bartlett_weight(h, n)))?;
    }
    Ok(acc)
}

/// Outcome of the covariance fixed-point check.
#[derive(Debug, Clone, Copy)]
pub struct CovIdentityCheck {
    /// Relative nuclear-norm residual of `Ĉ_X - Ê(ρ Ĉ_X ρ*) - Ĉ_ε`.
    pub residual: f64,
    /// Combined Monte Carlo standard error on the same relative scale.
    pub se: f64,
}

/// Checks the stationary covariance identity by Monte Carlo.
///
/// `Ĉ_X` comes from `n_reps` stationary paths of length `n_len`, `Ĉ_ε` from
/// fresh innovation draws, and the conjugated term averages `ρ Ĉ ρ*` over the
/// mixture components (exact for fixed and two-regime kinds) or over fresh
/// operator draws. Standard errors come from ten replication batches.
pub fn cov_identity_residual(
    model: &BrcaModel,
    n_reps: usize,
    n_len: usize,
    seed: u64,
) -> Result<CovIdentityCheck> {
    if n_reps < 20 || n_len < 2 {
        return Err(Error::InvalidArgument(
            "covariance identity check needs n_reps >= 20 and n_len >= 2".into(),
        ));
    }
    model.check_mean_contraction()?;
    let r = model.op_sampler.norm_moment(2.0);
    if r >= 1.0 {
        return Err(Error::ModelConfig(format!(
            "E|rho|^2 = {r:.4} >= 1: covariance identity hypotheses fail"
        )));
    }
    let grid = model.grid().clone();
    let m = grid.len();
    let batches = 10usize;
    let per_batch = n_reps / batches;
    if per_batch == 0 {
        return Err(Error::InvalidArgument("n_reps must be >= 10".into()));
    }

    let mut batch_diffs: Vec<DMatrix<f64>> = Vec::with_capacity(batches);
    let mut cx_total = DMatrix::<f64>::zeros(m, m);
    for b in 0..batches {
        let mut cx = DMatrix::<f64>::zeros(m, m);
        let mut ce = DMatrix::<f64>::zeros(m, m);
        let mut count_x = 0usize;
        let mut count_e = 0usize;
        for rep in 0..per_batch {
            let rep_seed = rng::replication_seed(seed, (b * per_batch + rep) as u64);
            let traj = simulate_recursive(model, &SimConfig::new(n_len, rep_seed))?;
            for i in 1..=n_len {
                let y = traj.centered_vector(i);
                cx.ger(1.0, &y, &y, 1.0);
                count_x += 1;
            }
            let mut noise_rng = rng::stream(rep_seed, rng::TAG_AUX);
            for _ in 0..n_len {
                let e = model.noise_sampler.sample(&mut noise_rng);
                ce.ger(1.0, e.vector(), e.vector(), 1.0);
                count_e += 1;
            }
        }
        cx /= count_x as f64;
        ce /= count_e as f64;
        cx_total += &cx;
        let cx_op = CovOperator::new(grid.clone(), cx.clone())?;
        let conj = expected_conjugation(
            model,
            &cx_op,
            rng::replication_seed(seed ^ 0x5555, b as u64),
        )?;
        batch_diffs.push(&cx - conj.matrix() - ce);
    }

    let denom = CovOperator::new(grid.clone(), cx_total / batches as f64)?.nuclear_norm();
    if denom < 1e-14 {
        // degenerate model: both sides vanish
        return Ok(CovIdentityCheck {
            residual: 0.0,
            se: 0.0,
        });
    }
    let mut mean_diff = DMatrix::<f64>::zeros(m, m);
    for d in &batch_diffs {
        mean_diff += d;
    }
    mean_diff /= batches as f64;
    let mut se_matrix = DMatrix::<f64>::zeros(m, m);
    for d in &batch_diffs {
        let dev = d - &mean_diff;
        se_matrix.zip_apply(&dev, |s, v| *s += v * v);
    }
    se_matrix.apply(|s| *s = (*s / (batches as f64 - 1.0) / batches as f64).sqrt());

    let residual = CovOperator::new(grid.clone(), mean_diff)?.nuclear_norm() / denom;
    let se = CovOperator::new(grid, se_matrix)?.nuclear_norm() / denom;
    Ok(CovIdentityCheck { residual, se })
}

/// `E(ρ C ρ*)`: exact finite mixture for the deterministic-support kinds,
/// Monte Carlo over fresh draws otherwise.
pub fn expected_conjugation(
    model: &BrcaModel,
    cov: &CovOperator,
    seed: u64,
) -> Result<CovOperator> {
    match &model.op_sampler {
        OperatorSampler::FixedKernel { op } => cov.conjugate_by(op),
        OperatorSampler::TwoRegimeBernoulli { op_a, op_b, prob_a } => Ok(cov
            .conjugate_by(op_a)?
            .scale(*prob_a)
            .add(&cov.conjugate_by(op_b)?.scale(1.0 - prob_a))?),
        _ => {
            let mut rng: Stream = rng::stream(seed, rng::TAG_OPERATOR);
            let draws = 10_000;
            let mut acc = CovOperator::zero(cov.grid().clone());
            for _ in 0..draws {
                let rho = model.op_sampler.sample(&mut rng);
                acc = acc.add(&cov.conjugate_by(&rho)?)?;
            }
            Ok(acc.scale(1.0 / draws as f64))
        }
    }
}

/// One row of the cross-covariance decay table.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DecayRow {
    pub h: usize,
    pub nuclear: f64,
    pub se: f64,
    pub bound: f64,
    pub violates: bool,
}

/// Empirical nuclear norms of the lag covariances next to the geometric bound
/// `(E‖ρ‖)^h · Ê‖X‖²`. A row is flagged when the empirical norm exceeds the
/// bound by more than four standard errors (ten-block batching).
pub fn cross_cov_decay_check(
    model: &BrcaModel,
    h_max: usize,
    n_len: usize,
    seed: u64,
) -> Result<Vec<DecayRow>> {
    if n_len < 20 * (h_max + 1) {
        return Err(Error::InvalidArgument(
            "path too short for the requested lag budget".into(),
        ));
    }
    let traj = simulate_recursive(model, &SimConfig::new(n_len, seed))?;
    let rate = model.op_sampler.norm_moment(1.0);
    let x2 = (1..=n_len)
        .map(|i| {
            let y = traj.centered(i);
            y.norm(NormKind::L2).powi(2)
        })
        .sum::<f64>()
        / n_len as f64;

    // block the path for standard errors
    let blocks = 10usize;
    let block_len = n_len / blocks;
    let mut rows = Vec::with_capacity(h_max + 1);
    for h in 0..=h_max {
        let full = empirical_cross_cov(&traj, h as i64, traj.mu())?.nuclear_norm();
        let mut block_norms = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let lo = b * block_len + 1;
            let hi = ((b + 1) * block_len).min(n_len);
            let mut acc = DMatrix::<f64>::zeros(traj.grid().len(), traj.grid().len());
            let mut count = 0usize;
            for i in lo..=hi.saturating_sub(h) {
                let a = traj.centered_vector(i);
                let bvec = traj.centered_vector(i + h);
                acc.ger(1.0, &a, &bvec, 1.0);
                count += 1;
            }
            if count > 0 {
                block_norms
                    .push(CovOperator::new(traj.grid().clone(), acc / count as f64)?.nuclear_norm());
            }
        }
        let bm = block_norms.iter().sum::<f64>() / block_norms.len() as f64;
        let bv = block_norms.iter().map(|v| (v - bm).powi(2)).sum::<f64>()
            / (block_norms.len() - 1).max(1) as f64;
        let se = (bv / block_norms.len() as f64).sqrt();
        let bound = rate.powi(h as i32) * x2;
        rows.push(DecayRow {
            h,
            nuclear: full,
            se,
            bound,
            violates: full > bound + 4.0 * se,
        });
    }
    Ok(rows)
}
