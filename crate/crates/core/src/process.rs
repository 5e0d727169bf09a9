//! Trajectory generation.
//!
//! Two independent engines produce paths of the random-coefficient recursion
//! `X_i - mu = rho_i (X_{i-1} - mu) + eps_i`:
//!
//! * [`simulate_recursive`] iterates the recursion from `X_0 = mu` through a
//!   burn-in window; this is the production path.
//! * [`simulate_series`] evaluates the truncated moving-average solution
//!   `X_i = mu + Σ_{j<=J} rho_i ∘ … ∘ rho_{i-j+1} (eps_{i-j})` with one
//!   coefficient and one innovation per time index; it exists purely as a
//!   cross-check of the recursive engine and costs `O(n·J)` applications.
//!
//! All simulation happens on the centered process, adding `mu` on output,
//! to avoid cancellation.

use std::fmt;

use nalgebra::DVector;

use crate::coeffgen::{NoiseSampler, OperatorSampler};
use crate::error::{Error, Result};
use crate::funspace::{Grid, GridFunction, LinearOp, NormKind, SharedGrid};
use crate::rng::{self, TAG_NOISE, TAG_OPERATOR};

/// Default burn-in; justified by geometric forgetting at rate `E‖ρ‖` for the
/// contractive models in this crate. A configuration knob, not a constant.
pub const DEFAULT_BURNIN: usize = 500;

/// Full model: mean function plus coefficient and innovation samplers on a
/// shared grid.
#[derive(Debug, Clone)]
pub struct BrcaModel {
    pub mu: GridFunction,
    pub op_sampler: OperatorSampler,
    pub noise_sampler: NoiseSampler,
}

impl BrcaModel {
    pub fn new(
        mu: GridFunction,
        op_sampler: OperatorSampler,
        noise_sampler: NoiseSampler,
    ) -> Result<Self> {
        Grid::check_same(mu.grid(), op_sampler.grid())?;
        Grid::check_same(mu.grid(), noise_sampler.grid())?;
        Ok(BrcaModel {
            mu,
            op_sampler,
            noise_sampler,
        })
    }

    /// Centered model (`mu = 0`) on the given grid.
    pub fn centered(
        grid: SharedGrid,
        op_sampler: OperatorSampler,
        noise_sampler: NoiseSampler,
    ) -> Result<Self> {
        BrcaModel::new(GridFunction::zero(grid), op_sampler, noise_sampler)
    }

    pub fn grid(&self) -> &SharedGrid {
        self.mu.grid()
    }

    /// Verifies `‖E ρ‖ < 1` (required for the resolvent and for stationary
    /// simulation) and returns the norm.
    pub fn check_mean_contraction(&self) -> Result<f64> {
        let norm = self.op_sampler.mean().norm(NormKind::L2);
        if norm < 1.0 {
            Ok(norm)
        } else {
            Err(Error::ModelConfig(format!(
                "mean operator norm {norm:.4} >= 1: model is not mean-contractive"
            )))
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "m={}, op={}, noise={}, |mu|2={:.3}",
            self.grid().len(),
            self.op_sampler,
            self.noise_sampler,
            self.mu.norm(NormKind::L2)
        )
    }
}

/// Which engine produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Recursive,
    Series,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Engine::Recursive => write!(f, "recursive"),
            Engine::Series => write!(f, "series"),
        }
    }
}

/// Simulation parameters. `truncation` only matters for the series engine.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub n: usize,
    pub burnin: usize,
    pub truncation: usize,
    pub seed: u64,
    pub record_draws: bool,
}

impl SimConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        SimConfig {
            n,
            burnin: DEFAULT_BURNIN,
            truncation: 0,
            seed,
            record_draws: false,
        }
    }

    pub fn with_burnin(mut self, burnin: usize) -> Self {
        self.burnin = burnin;
        self
    }

    pub fn with_truncation(mut self, j: usize) -> Self {
        self.truncation = j;
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_draws = true;
        self
    }
}

/// A simulated path `X_0 .. X_n`, optionally with the coefficient and noise
/// draws `(rho_i, eps_i), i = 1..n` that produced it.
#[derive(Debug, Clone)]
pub struct Trajectory {
    mu: GridFunction,
    states: Vec<GridFunction>,
    rho_draws: Option<Vec<LinearOp>>,
    eps_draws: Option<Vec<GridFunction>>,
    engine: Engine,
    seed: u64,
}

impl Trajectory {
    /// Number of steps `n`; the path holds `n + 1` states.
    pub fn len(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn grid(&self) -> &SharedGrid {
        self.mu.grid()
    }

    pub fn mu(&self) -> &GridFunction {
        &self.mu
    }

    pub fn engine(&self) -> Engine {
        self.engine
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `X_i`, `0 <= i <= n`.
    pub fn state(&self, i: usize) -> &GridFunction {
        &self.states[i]
    }

    pub fn states(&self) -> &[GridFunction] {
        &self.states
    }

    /// `X_i - mu`.
    pub fn centered(&self, i: usize) -> GridFunction {
        self.states[i].sub(&self.mu).expect("states share the grid")
    }

    pub(crate) fn centered_vector(&self, i: usize) -> DVector<f64> {
        self.states[i].vector() - self.mu.vector()
    }

    pub fn rho_draws(&self) -> Option<&[LinearOp]> {
        self.rho_draws.as_deref()
    }

    pub fn eps_draws(&self) -> Option<&[GridFunction]> {
        self.eps_draws.as_deref()
    }

    /// Test-only constructor for hand-built paths.
    #[cfg(test)]
    pub(crate) fn from_states(mu: GridFunction, states: Vec<GridFunction>) -> Self {
        assert!(states.len() >= 2);
        Trajectory {
            mu,
            states,
            rho_draws: None,
            eps_draws: None,
            engine: Engine::Recursive,
            seed: 0,
        }
    }
}

/// Iterates the recursion starting from `X = mu`, discarding `burnin` steps.
/// Deterministic given the seed.
pub fn simulate_recursive(model: &BrcaModel, cfg: &SimConfig) -> Result<Trajectory> {
    model.check_mean_contraction()?;
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("path length n must be >= 1".into()));
    }
    let grid = model.grid().clone();
    let mut op_rng = rng::stream(cfg.seed, TAG_OPERATOR);
    let mut noise_rng = rng::stream(cfg.seed, TAG_NOISE);

    let mut y = DVector::<f64>::zeros(grid.len());
    let mut states = Vec::with_capacity(cfg.n + 1);
    let mut rho_draws = cfg.record_draws.then(|| Vec::with_capacity(cfg.n));
    let mut eps_draws = cfg.record_draws.then(|| Vec::with_capacity(cfg.n));

    let total = cfg.burnin + cfg.n;
    if cfg.burnin == 0 {
        states.push(add_mu(&grid, &model.mu, &y));
    }
    for t in 1..=total {
        let rho = model.op_sampler.sample(&mut op_rng);
        let eps = model.noise_sampler.sample(&mut noise_rng);
        y = rho.apply_vector(&y) + eps.vector();
        if t > cfg.burnin {
            states.push(add_mu(&grid, &model.mu, &y));
            if let Some(rhos) = rho_draws.as_mut() {
                rhos.push(rho);
            }
            if let Some(epss) = eps_draws.as_mut() {
                epss.push(eps);
            }
        } else if t == cfg.burnin {
            states.push(add_mu(&grid, &model.mu, &y));
        }
    }
    Ok(Trajectory {
        mu: model.mu.clone(),
        states,
        rho_draws,
        eps_draws,
        engine: Engine::Recursive,
        seed: cfg.seed,
    })
}

/// Streams the recursion without storing states: `visit(i, X_i)` is called for
/// `i = 0..=n` after burn-in. Used by the long-path harnesses.
pub fn simulate_fold(
    model: &BrcaModel,
    n: usize,
    burnin: usize,
    seed: u64,
    mut visit: impl FnMut(usize, &GridFunction),
) -> Result<()> {
    model.check_mean_contraction()?;
    if n == 0 {
        return Err(Error::InvalidArgument("path length n must be >= 1".into()));
    }
    let grid = model.grid().clone();
    let mut op_rng = rng::stream(seed, TAG_OPERATOR);
    let mut noise_rng = rng::stream(seed, TAG_NOISE);
    let mut y = DVector::<f64>::zeros(grid.len());
    if burnin == 0 {
        visit(0, &add_mu(&grid, &model.mu, &y));
    }
    for t in 1..=burnin + n {
        let rho = model.op_sampler.sample(&mut op_rng);
        let eps = model.noise_sampler.sample(&mut noise_rng);
        y = rho.apply_vector(&y) + eps.vector();
        if t >= burnin {
            visit(t - burnin, &add_mu(&grid, &model.mu, &y));
        }
    }
    Ok(())
}

/// Evaluates the truncated series solution at each reported time.
///
/// Draws are indexed by absolute time and shared across overlapping windows.
/// The effective offset is `max(burnin, J + 1)`, so with `burnin >= J + 1`
/// this engine consumes exactly the same draw sequence as the recursive one.
pub fn simulate_series(model: &BrcaModel, cfg: &SimConfig) -> Result<Trajectory> {
    model.check_mean_contraction()?;
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("path length n must be >= 1".into()));
    }
    if cfg.truncation == 0 {
        return Err(Error::InvalidArgument(
            "series engine needs truncation >= 1".into(),
        ));
    }
    let j_max = cfg.truncation;
    let grid = model.grid().clone();
    let offset = cfg.burnin.max(j_max + 1);
    let total = offset + cfg.n;

    let mut op_rng = rng::stream(cfg.seed, TAG_OPERATOR);
    let mut noise_rng = rng::stream(cfg.seed, TAG_NOISE);
    // draws indexed 1..=total; index 0 unused
    let mut rhos = Vec::with_capacity(total + 1);
    let mut epss = Vec::with_capacity(total + 1);
    rhos.push(LinearOp::zero(grid.clone()));
    epss.push(GridFunction::zero(grid.clone()));
    for _ in 1..=total {
        rhos.push(model.op_sampler.sample(&mut op_rng));
        epss.push(model.noise_sampler.sample(&mut noise_rng));
    }

    let mut states = Vec::with_capacity(cfg.n + 1);
    for i in 0..=cfg.n {
        let t = offset + i;
        // nested evaluation of Σ_{j=0}^{J} rho_t ∘ … ∘ rho_{t-j+1} (eps_{t-j})
        let mut acc = epss[t - j_max].vector().clone();
        for k in (t - j_max + 1)..=t {
            acc = rhos[k].apply_vector(&acc) + epss[k].vector();
        }
        states.push(add_mu(&grid, &model.mu, &acc));
    }

    let (rho_draws, eps_draws) = if cfg.record_draws {
        (
            Some(rhos[offset + 1..].to_vec()),
            Some(epss[offset + 1..].to_vec()),
        )
    } else {
        (None, None)
    };
    Ok(Trajectory {
        mu: model.mu.clone(),
        states,
        rho_draws,
        eps_draws,
        engine: Engine::Series,
        seed: cfg.seed,
    })
}

fn add_mu(grid: &SharedGrid, mu: &GridFunction, y: &DVector<f64>) -> GridFunction {
    GridFunction::from_vector(grid.clone(), y + mu.vector())
}

/// Closed-form geometric tail bound for the truncated series:
/// `E‖ε‖^p · (Σ_{j>J} r^{j/p})^p` with `r = E‖ρ‖^p`.
///
/// For `p <= 2` the innovation moment uses the bound `(E‖ε‖²)^{p/2}`; for
/// `p > 2` only sure-bounded noise is supported.
pub fn series_tail_bound(model: &BrcaModel, truncation: usize, p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("p must be >= 1 (got {p})")));
    }
    let r = model.op_sampler.norm_moment(p);
    if r >= 1.0 {
        return Err(Error::ModelConfig(format!(
            "E|rho|^{p} = {r:.4} >= 1: series tail does not contract"
        )));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let eps_moment = if p <= 2.0 {
        model.noise_sampler.second_moment().powf(p / 2.0)
    } else if let Some(b) = model.noise_sampler.sup_bound() {
        b.powf(p)
    } else {
        return Err(Error::InvalidArgument(
            "series tail bound with p > 2 needs sure-bounded noise".into(),
        ));
    };
    let ratio = r.powf(1.0 / p);
    let tail = ratio.powi(truncation as i32 + 1) / (1.0 - ratio);
    Ok(eps_moment * tail.powf(p))
}

/// Smallest truncation with [`series_tail_bound`] below `tol`.
pub fn default_truncation(model: &BrcaModel, p: f64, tol: f64) -> Result<usize> {
    for j in 1..=100_000 {
        if series_tail_bound(model, j, p)? < tol {
            return Ok(j);
        }
    }
    Err(Error::Convergence(
        "no truncation below 100000 meets the tail tolerance".into(),
    ))
}

/// Worst relative gap, over `i = 1..=n`, between the recorded state and the
/// finite decomposition `Σ_{j<i} A_{i,j} eps_{i-j} + A_{i,i} (X_0 - mu)` of the
/// centered process. The full products `A_{i,i}` are assembled by operator
/// composition, so this exercises the operator algebra rather than replaying
/// the recursion.
pub fn finite_decomposition_residual(traj: &Trajectory) -> Result<f64> {
    if traj.engine() != Engine::Recursive {
        return Err(Error::InvalidArgument(
            "finite decomposition holds only for recursive trajectories".into(),
        ));
    }
    let (rhos, epss) = match (traj.rho_draws(), traj.eps_draws()) {
        (Some(r), Some(e)) => (r, e),
        _ => {
            return Err(Error::InvalidArgument(
                "finite decomposition needs recorded draws".into(),
            ))
        }
    };
    let y0 = traj.centered_vector(0);
    let mut product = LinearOp::identity(traj.grid().clone());
    let mut noise_part = DVector::<f64>::zeros(traj.grid().len());
    let mut worst = 0.0f64;
    for i in 1..=traj.len() {
        let rho = &rhos[i - 1];
        noise_part = rho.apply_vector(&noise_part) + epss[i - 1].vector();
        product = rho.compose(&product)?;
        let reconstructed = &noise_part + product.apply_vector(&y0);
        let actual = traj.centered_vector(i);
        let diff = GridFunction::from_vector(traj.grid().clone(), &actual - &reconstructed);
        let scale = GridFunction::from_vector(traj.grid().clone(), actual).norm(NormKind::L2);
        worst = worst.max(diff.norm(NormKind::L2) / (1.0 + scale));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffgen::AmplitudeLaw;
    use approx::assert_relative_eq;

    fn grid(m: usize) -> SharedGrid {
        Grid::uniform(m).unwrap()
    }

    fn gaussian_model(m: usize, sigma: f64, op: OperatorSampler) -> BrcaModel {
        let g = grid(m);
        BrcaModel::new(
            GridFunction::from_fn(g.clone(), |t| 1.0 + (2.0 * std::f64::consts::PI * t).sin()),
            op,
            NoiseSampler::iid_gaussian(g, sigma).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_coefficient_reduces_to_noise_around_mu() {
        let g = grid(6);
        let model = gaussian_model(6, 1.0, OperatorSampler::fixed(LinearOp::zero(g)));
        let cfg = SimConfig::new(50, 11).recording();
        let traj = simulate_recursive(&model, &cfg).unwrap();
        let eps = traj.eps_draws().unwrap();
        for i in 1..=traj.len() {
            let diff = traj
                .centered(i)
                .sub(&eps[i - 1])
                .unwrap()
                .norm(NormKind::Sup);
            assert!(diff < 1e-13, "step {i}: {diff}");
        }
    }

    #[test]
    fn deterministic_contraction_decays_geometrically() {
        // noise off, fixed c*I, start displaced: X_k - mu = c^k (X_0 - mu).
        // start from a noise-driven state by using burnin 0 and a one-off
        // nonzero initial condition built through a single noise draw:
        // simpler: mu = 0 and check via the series engine identity instead.
        let g = grid(4);
        let c = 0.5;
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::scaled_identity(g.clone(), c)),
            NoiseSampler::iid_gaussian(g.clone(), 0.0).unwrap(),
        )
        .unwrap();
        // with zero noise and X_0 = mu the whole path stays at mu
        let traj = simulate_recursive(&model, &SimConfig::new(10, 3)).unwrap();
        for i in 0..=10 {
            assert_eq!(traj.centered(i).norm(NormKind::Sup), 0.0);
        }
        // the decay itself, via the recorded-draw identity on a noisy start
        let noisy = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::scaled_identity(g, c)),
            NoiseSampler::iid_gaussian(model.grid().clone(), 1.0).unwrap(),
        )
        .unwrap();
        let traj = simulate_recursive(&noisy, &SimConfig::new(30, 5).recording()).unwrap();
        let eps = traj.eps_draws().unwrap();
        for i in 1..=traj.len() {
            let expect = traj.centered(i - 1).scale(c).add(&eps[i - 1]).unwrap();
            let gap = traj.centered(i).sub(&expect).unwrap().norm(NormKind::L2);
            assert!(gap < 1e-12);
        }
    }

    #[test]
    fn recorded_draws_satisfy_the_recursion() {
        let model = gaussian_model(
            8,
            0.7,
            OperatorSampler::random_kernel(
                LinearOp::identity(grid(8)),
                AmplitudeLaw::uniform(0.0, 0.8).unwrap(),
            ),
        );
        let traj = simulate_recursive(&model, &SimConfig::new(100, 17).recording()).unwrap();
        let rhos = traj.rho_draws().unwrap();
        let eps = traj.eps_draws().unwrap();
        for i in 1..=traj.len() {
            let expect = rhos[i - 1]
                .apply(&traj.centered(i - 1))
                .unwrap()
                .add(&eps[i - 1])
                .unwrap();
            let gap = traj.centered(i).sub(&expect).unwrap().norm(NormKind::Sup);
            assert!(gap < 1e-12, "step {i}: {gap}");
        }
    }

    #[test]
    fn identical_seeds_reproduce_bitwise() {
        let model = gaussian_model(
            5,
            1.0,
            OperatorSampler::random_kernel(
                LinearOp::identity(grid(5)),
                AmplitudeLaw::uniform(0.0, 0.6).unwrap(),
            ),
        );
        let cfg = SimConfig::new(64, 99);
        let a = simulate_recursive(&model, &cfg).unwrap();
        let b = simulate_recursive(&model, &cfg).unwrap();
        for i in 0..=64 {
            assert_eq!(a.state(i).values(), b.state(i).values());
        }
    }

    #[test]
    fn non_contractive_model_is_refused() {
        let g = grid(3);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::scaled_identity(g.clone(), 1.1)),
            NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            simulate_recursive(&model, &SimConfig::new(10, 1)),
            Err(Error::ModelConfig(_))
        ));
    }

    #[test]
    fn series_equals_recursive_for_zero_coefficient() {
        let g = grid(4);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::zero(g.clone())),
            NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
        )
        .unwrap();
        let j = 4;
        let cfg = SimConfig::new(20, 7).with_burnin(j + 1).with_truncation(j);
        let series = simulate_series(&model, &cfg).unwrap();
        let recursive = simulate_recursive(&model, &cfg).unwrap();
        for i in 0..=20 {
            let gap = series
                .state(i)
                .sub(recursive.state(i))
                .unwrap()
                .norm(NormKind::Sup);
            assert!(gap < 1e-13, "state {i}: {gap}");
        }
    }

    #[test]
    fn series_is_the_truncated_geometric_sum() {
        // fixed c*I: X_n = Σ_{k<=J} c^k eps_{n-k}; rebuild the sum from the
        // draws recorded by a recursive run with the same seed (the engines
        // share absolute draw indexing when burnin >= J + 1)
        let g = grid(1);
        let c = 0.5;
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::scaled_identity(g.clone(), c)),
            NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
        )
        .unwrap();
        let j = 5;
        let n = 12;
        let cfg = SimConfig::new(n, 21)
            .with_burnin(j + 1)
            .with_truncation(j)
            .recording();
        let traj = simulate_series(&model, &cfg).unwrap();
        let rec = simulate_recursive(&model, &cfg).unwrap();
        let eps = rec.eps_draws().unwrap();
        let mut checked = 0;
        // states i > j keep every summand inside the recorded draw window
        for i in j + 1..=n {
            let mut expect = 0.0;
            for k in 0..=j {
                expect += c.powi(k as i32) * eps[i - 1 - k].values()[0];
            }
            assert_relative_eq!(traj.state(i).values()[0], expect, epsilon = 1e-12);
            checked += 1;
        }
        assert!(checked >= 6);
    }

    #[test]
    fn tail_bound_closed_forms() {
        let g = grid(2);
        // E|rho| = 0.5 exactly: fixed kernel 0.5*I; noise second moment 1
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::scaled_identity(g.clone(), 0.5)),
            NoiseSampler::iid_gaussian(g.clone(), 1.0).unwrap(),
        )
        .unwrap();
        let b = series_tail_bound(&model, 10, 1.0).unwrap();
        assert_relative_eq!(b, 0.5f64.powi(10), epsilon = 1e-12);

        // zero coefficient: bound identically zero
        let zero = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::zero(g.clone())),
            NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(series_tail_bound(&zero, 0, 1.0).unwrap(), 0.0);

        // monotone decreasing in the truncation
        let mut prev = f64::INFINITY;
        for j in [1, 2, 5, 10, 20] {
            let bound = series_tail_bound(&model, j, 1.5).unwrap();
            assert!(bound < prev);
            prev = bound;
        }
    }

    #[test]
    fn tail_bound_rejects_non_contractive_moments() {
        let g = grid(2);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::scaled_identity(g.clone(), 1.0)),
            NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
        )
        .unwrap();
        assert!(series_tail_bound(&model, 5, 1.0).is_err());
    }

    #[test]
    fn default_truncation_meets_tolerance() {
        let g = grid(2);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::scaled_identity(g.clone(), 0.6)),
            NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
        )
        .unwrap();
        let j = default_truncation(&model, 2.0, 1e-6).unwrap();
        assert!(series_tail_bound(&model, j, 2.0).unwrap() < 1e-6);
        assert!(j > 1);
    }

    #[test]
    fn finite_decomposition_residual_is_tiny() {
        let model = gaussian_model(
            8,
            1.0,
            OperatorSampler::random_kernel(
                LinearOp::identity(grid(8)),
                AmplitudeLaw::uniform(0.0, 0.8).unwrap(),
            ),
        );
        let traj = simulate_recursive(&model, &SimConfig::new(50, 13).recording()).unwrap();
        let res = finite_decomposition_residual(&traj).unwrap();
        assert!(res < 1e-10, "residual {res}");
    }

    #[test]
    fn finite_decomposition_zero_coefficient() {
        let g = grid(4);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::zero(g.clone())),
            NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
        )
        .unwrap();
        let traj = simulate_recursive(&model, &SimConfig::new(30, 4).recording()).unwrap();
        assert!(finite_decomposition_residual(&traj).unwrap() < 1e-14);
    }

    #[test]
    fn finite_decomposition_scalar_oracle() {
        // recompute everything in plain f64 arithmetic at m = 1
        let g = grid(1);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::random_kernel(
                LinearOp::identity(g.clone()),
                AmplitudeLaw::uniform(0.0, 0.8).unwrap(),
            ),
            NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
        )
        .unwrap();
        let traj = simulate_recursive(&model, &SimConfig::new(200, 77).recording()).unwrap();
        assert!(finite_decomposition_residual(&traj).unwrap() < 1e-10);

        let rhos: Vec<f64> = traj
            .rho_draws()
            .unwrap()
            .iter()
            .map(|op| op.kernel()[(0, 0)])
            .collect();
        let eps: Vec<f64> = traj
            .eps_draws()
            .unwrap()
            .iter()
            .map(|e| e.values()[0])
            .collect();
        let mut x = traj.state(0).values()[0];
        for i in 1..=traj.len() {
            x = rhos[i - 1] * x + eps[i - 1];
            assert_relative_eq!(traj.state(i).values()[0], x, epsilon = 1e-12);
        }
    }

    #[test]
    fn finite_decomposition_requires_recorded_recursive_paths() {
        let g = grid(2);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::scaled_identity(g.clone(), 0.5)),
            NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
        )
        .unwrap();
        let no_draws = simulate_recursive(&model, &SimConfig::new(10, 1)).unwrap();
        assert!(finite_decomposition_residual(&no_draws).is_err());
        let series = simulate_series(
            &model,
            &SimConfig::new(10, 1).with_truncation(30).recording(),
        )
        .unwrap();
        assert!(finite_decomposition_residual(&series).is_err());
    }

    #[test]
    fn scalar_stationary_variance_matches_closed_form() {
        // Var X = sigma^2 / (1 - E rho^2) for the scalar model
        let g = grid(1);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::random_kernel(
                LinearOp::identity(g.clone()),
                AmplitudeLaw::uniform(0.0, 0.8).unwrap(),
            ),
            NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
        )
        .unwrap();
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        simulate_fold(&model, n, 500, 2024, |i, x| {
            if i >= 1 {
                let v = x.values()[0];
                sum += v;
                sumsq += v * v;
            }
        })
        .unwrap();
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let e_rho_sq = 0.64 / 3.0;
        let oracle = 1.0 / (1.0 - e_rho_sq);
        assert!(
            (var - oracle).abs() / oracle < 0.02,
            "var {var}, oracle {oracle}"
        );
    }

    #[test]
    fn both_engines_share_the_stationary_law() {
        // first/second moments of X_n agree across engines over replications
        let g = grid(4);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::random_kernel(
                LinearOp::identity(g.clone()),
                AmplitudeLaw::uniform(0.0, 0.7).unwrap(),
            ),
            NoiseSampler::iid_gaussian(g.clone(), 1.0).unwrap(),
        )
        .unwrap();
        let probe = GridFunction::constant(g, 1.0);
        let reps = 2000;
        let j = default_truncation(&model, 2.0, 1e-6).unwrap();
        let collect = |engine: Engine| -> (Vec<f64>, Vec<f64>) {
            let mut firsts = Vec::with_capacity(reps);
            let mut seconds = Vec::with_capacity(reps);
            for r in 0..reps {
                let seed = rng::replication_seed(31_000 + engine as u64, r as u64);
                let cfg = SimConfig::new(3, seed).with_burnin(60).with_truncation(j);
                let traj = match engine {
                    Engine::Recursive => simulate_recursive(&model, &cfg).unwrap(),
                    Engine::Series => simulate_series(&model, &cfg).unwrap(),
                };
                let v = traj.state(3).inner(&probe).unwrap();
                firsts.push(v);
                seconds.push(v * v);
            }
            (firsts, seconds)
        };
        let (f_rec, s_rec) = collect(Engine::Recursive);
        let (f_ser, s_ser) = collect(Engine::Series);
        let check = |a: &[f64], b: &[f64], what: &str| {
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            let va = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / (a.len() - 1) as f64;
            let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (b.len() - 1) as f64;
            let se = (va / a.len() as f64 + vb / b.len() as f64).sqrt();
            assert!(
                (ma - mb).abs() < 4.0 * se,
                "{what}: {ma} vs {mb} (se {se})"
            );
        };
        check(&f_rec, &f_ser, "first moment");
        check(&s_rec, &s_ser, "second moment");
    }

    #[test]
    fn path_halves_look_stationary() {
        let g = grid(4);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::random_kernel(
                LinearOp::identity(g.clone()),
                AmplitudeLaw::uniform(0.0, 0.8).unwrap(),
            ),
            NoiseSampler::iid_gaussian(g.clone(), 1.0).unwrap(),
        )
        .unwrap();
        let probe = GridFunction::from_fn(g, |t| 1.0 + t);
        let n = 40_000;
        let mut vals = Vec::with_capacity(n);
        simulate_fold(&model, n, 200, 555, |i, x| {
            if i >= 1 {
                vals.push(x.inner(&probe).unwrap());
            }
        })
        .unwrap();
        let (a, b) = vals.split_at(n / 2);
        let stats = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            (m, v)
        };
        let (ma, va) = stats(a);
        let (mb, vb) = stats(b);
        // correlated samples: inflate the iid SE by a generous mixing factor
        let se_mean = ((va + vb) / a.len() as f64).sqrt() * 3.0;
        assert!((ma - mb).abs() < 4.0 * se_mean, "means {ma} vs {mb}");
        let se_var = ((va.powi(2) + vb.powi(2)) * 2.0 / a.len() as f64).sqrt() * 3.0;
        assert!((va - vb).abs() < 4.0 * se_var, "variances {va} vs {vb}");
    }
}
