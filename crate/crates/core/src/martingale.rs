//! Martingale-plus-coboundary decomposition of partial sums.
//!
//! With `R = (I - ρ̄)^{-1}` and the centered states `Y_i = X_i - mu`, define
//!
//! ```text
//! N_i = R ρ̄ (Y_i),       M_i = R(Y_i) - R ρ̄ (Y_{i-1}).
//! ```
//!
//! Then `Y_i = N_{i-1} - N_i + M_i`, the `M_i` are stationary martingale
//! differences, and summing telescopes to
//! `Σ_{i=1..n} Y_i = N_0 - N_n + Σ M_i`. All identities here are stated and
//! tested on the centered process, which makes them exact up to the resolvent
//! tolerance.
//!
//! The resolvent is built as a Neumann series, which only needs operator
//! products; a direct weighted linear solve is kept in the test suite as an
//! independent oracle.

use crate::error::{Error, Result};
use crate::funspace::{GridFunction, LinearOp, NormKind};
use crate::process::{BrcaModel, Trajectory};
use crate::rng::Stream;

/// Truncation control for the Neumann series.
#[derive(Debug, Clone, Copy)]
pub struct NeumannConfig {
    pub tol: f64,
    pub max_terms: usize,
}

impl Default for NeumannConfig {
    fn default() -> Self {
        NeumannConfig {
            tol: 1e-12,
            max_terms: 10_000,
        }
    }
}

/// The decomposition of one trajectory.
#[derive(Debug, Clone)]
pub struct Coboundary {
    /// `N_0 .. N_n`.
    pub potentials: Vec<GridFunction>,
    /// `M_1 .. M_n` (index 0 holds `M_1`).
    pub increments: Vec<GridFunction>,
    /// The resolvent approximation `R ≈ (I - ρ̄)^{-1}`.
    pub inverse: LinearOp,
}

/// Partial sums of `Σ ρ̄^k` until the next term is below `tol` relative to the
/// contraction gap. The result satisfies `‖R(I - ρ̄) - I‖ < 10·tol`.
pub fn neumann_inverse(rho_bar: &LinearOp, cfg: &NeumannConfig) -> Result<LinearOp> {
    if cfg.tol <= 0.0 {
        return Err(Error::InvalidArgument("Neumann tol must be > 0".into()));
    }
    let norm = rho_bar.norm(NormKind::L2);
    if norm >= 1.0 {
        return Err(Error::NotContractive { norm });
    }
    let grid = rho_bar.grid().clone();
    let mut sum = LinearOp::identity(grid.clone());
    let mut term = LinearOp::identity(grid.clone());
    let mut added = 1usize;
    loop {
        term = term.compose(rho_bar)?;
        if term.norm(NormKind::L2) / (1.0 - norm) < cfg.tol {
            break;
        }
        if added >= cfg.max_terms {
            return Err(Error::Convergence(format!(
                "Neumann series did not reach tol {} within {} terms",
                cfg.tol, cfg.max_terms
            )));
        }
        sum = sum.add(&term)?;
        added += 1;
    }
    let identity = LinearOp::identity(grid.clone());
    let residual = sum
        .compose(&identity.sub(rho_bar)?)?
        .sub(&identity)?
        .norm(NormKind::L2);
    if residual > 10.0 * cfg.tol {
        return Err(Error::Convergence(format!(
            "Neumann residual {residual:.3e} exceeds 10*tol"
        )));
    }
    Ok(sum)
}

/// Decomposes a trajectory with respect to the mean operator `rho_bar`.
pub fn decompose(traj: &Trajectory, rho_bar: &LinearOp, cfg: &NeumannConfig) -> Result<Coboundary> {
    let inverse = neumann_inverse(rho_bar, cfg)?;
    let smoothed = inverse.compose(rho_bar)?;
    let n = traj.len();
    let mut potentials = Vec::with_capacity(n + 1);
    for i in 0..=n {
        potentials.push(smoothed.apply(&traj.centered(i))?);
    }
    let mut increments = Vec::with_capacity(n);
    for i in 1..=n {
        let lead = inverse.apply(&traj.centered(i))?;
        increments.push(lead.sub(&potentials[i - 1])?);
    }
    Ok(Coboundary {
        potentials,
        increments,
        inverse,
    })
}

/// Relative gap in the telescoped identity
/// `Σ Y_i = N_0 - N_n + Σ M_i`, normalized by `1 + ‖Σ Y_i‖`.
pub fn telescoping_residual(traj: &Trajectory, cob: &Coboundary) -> f64 {
    let n = traj.len();
    let grid = traj.grid().clone();
    let mut lhs = GridFunction::zero(grid.clone());
    for i in 1..=n {
        lhs = lhs.add(&traj.centered(i)).expect("shared grid");
    }
    let mut rhs = cob.potentials[0]
        .sub(&cob.potentials[n])
        .expect("shared grid");
    for m in &cob.increments {
        rhs = rhs.add(m).expect("shared grid");
    }
    let gap = lhs.sub(&rhs).expect("shared grid").norm(NormKind::L2);
    gap / (1.0 + lhs.norm(NormKind::L2))
}

/// Outcome of the conditional mean-zero resampling test.
#[derive(Debug, Clone, Copy)]
pub struct MartingaleMeanTest {
    /// Norm of the empirical mean of the resampled increments.
    pub mean_norm: f64,
    /// Norm of the coordinatewise standard errors.
    pub se: f64,
    pub n_resample: usize,
}

/// Holds `X_{i-1} = x_prev` fixed, draws `(ρ_i, ε_i)` fresh `n_resample`
/// times, forms the martingale increment each time, and reports the norm of
/// the empirical mean together with a Monte Carlo standard error. Conditioning
/// on the realized state is the implementable surrogate for conditioning on
/// the driving filtration.
pub fn martingale_mean_test(
    model: &BrcaModel,
    x_prev: &GridFunction,
    n_resample: usize,
    cfg: &NeumannConfig,
    op_rng: &mut Stream,
    noise_rng: &mut Stream,
) -> Result<MartingaleMeanTest> {
    if n_resample < 1000 {
        return Err(Error::InvalidArgument(
            "martingale mean test needs n_resample >= 1000".into(),
        ));
    }
    let rho_bar = model.op_sampler.mean();
    let inverse = neumann_inverse(&rho_bar, cfg)?;
    let smoothed = inverse.compose(&rho_bar)?;
    let y_prev = x_prev.sub(&model.mu)?;
    let anchor = smoothed.apply(&y_prev)?;

    let m = model.grid().len();
    let mut mean = vec![0.0f64; m];
    let mut m2 = vec![0.0f64; m];
    for k in 0..n_resample {
        let rho = model.op_sampler.sample(op_rng);
        let eps = model.noise_sampler.sample(noise_rng);
        let y_next = rho.apply(&y_prev)?.add(&eps)?;
        let increment = inverse.apply(&y_next)?.sub(&anchor)?;
        // Welford update per coordinate
        let kf = (k + 1) as f64;
        for (j, v) in increment.values().iter().enumerate() {
            let delta = v - mean[j];
            mean[j] += delta / kf;
            m2[j] += delta * (v - mean[j]);
        }
    }
    let grid = model.grid().clone();
    let mean_fn = GridFunction::new(grid.clone(), mean)?;
    let n = n_resample as f64;
    let se_fn = GridFunction::new(
        grid,
        m2.iter()
            .map(|&s| (s / (n - 1.0).max(1.0) / n).sqrt())
            .collect(),
    )?;
    Ok(MartingaleMeanTest {
        mean_norm: mean_fn.norm(NormKind::L2),
        se: se_fn.norm(NormKind::L2),
        n_resample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffgen::{AmplitudeLaw, NoiseSampler, OperatorSampler};
    use crate::funspace::Grid;
    use crate::process::{simulate_recursive, SimConfig};
    use crate::rng::{self, TAG_NOISE, TAG_OPERATOR};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn grid(m: usize) -> crate::funspace::SharedGrid {
        Grid::uniform(m).unwrap()
    }

    #[test]
    fn neumann_of_zero_is_identity() {
        let g = grid(5);
        let r = neumann_inverse(&LinearOp::zero(g.clone()), &NeumannConfig::default()).unwrap();
        let id = LinearOp::identity(g);
        for (x, y) in r.kernel().iter().zip(id.kernel().iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn neumann_of_scaled_identity_is_geometric_sum() {
        let g = grid(4);
        let r = neumann_inverse(
            &LinearOp::scaled_identity(g.clone(), 0.5),
            &NeumannConfig::default(),
        )
        .unwrap();
        let expect = LinearOp::scaled_identity(g, 2.0);
        for (x, y) in r.kernel().iter().zip(expect.kernel().iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn neumann_refuses_non_contractions() {
        let g = grid(3);
        let r = neumann_inverse(
            &LinearOp::scaled_identity(g, 1.05),
            &NeumannConfig::default(),
        );
        assert!(matches!(r, Err(Error::NotContractive { .. })));
        // the scalar grid hits norm one without SVD roundoff
        let r = neumann_inverse(
            &LinearOp::scaled_identity(grid(1), 1.0),
            &NeumannConfig::default(),
        );
        assert!(matches!(r, Err(Error::NotContractive { .. })));
    }

    #[test]
    fn neumann_reports_term_budget_exhaustion() {
        let g = grid(3);
        let cfg = NeumannConfig {
            tol: 1e-12,
            max_terms: 5,
        };
        let r = neumann_inverse(&LinearOp::scaled_identity(g, 0.9), &cfg);
        assert!(matches!(r, Err(Error::Convergence(_))));
    }

    fn random_contraction(m: usize, target_norm: f64, seed: u64) -> LinearOp {
        let g = grid(m);
        let mut rng = rng::stream(seed, TAG_OPERATOR);
        let k = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let op = LinearOp::new(g, k).unwrap();
        op.scale(target_norm / op.norm(NormKind::L2))
    }

    // oracle: direct LU solve of the weighted system, back in kernel coords
    fn direct_inverse(rho_bar: &LinearOp) -> LinearOp {
        let grid = rho_bar.grid().clone();
        let m = grid.len();
        let w = grid.weights().to_vec();
        let mut action = DMatrix::<f64>::identity(m, m);
        for j in 0..m {
            for i in 0..m {
                action[(i, j)] -= rho_bar.kernel()[(i, j)] * w[j];
            }
        }
        let inv = action.try_inverse().expect("contraction gives a regular system");
        let kernel = DMatrix::from_fn(m, m, |i, j| inv[(i, j)] / w[j]);
        LinearOp::new(grid, kernel).unwrap()
    }

    #[test]
    fn neumann_agrees_with_direct_solve() {
        let rho = random_contraction(16, 0.7, 41);
        let cfg = NeumannConfig::default();
        let r = neumann_inverse(&rho, &cfg).unwrap();
        let identity = LinearOp::identity(rho.grid().clone());
        let residual = r
            .compose(&identity.sub(&rho).unwrap())
            .unwrap()
            .sub(&identity)
            .unwrap()
            .norm(NormKind::L2);
        assert!(residual < 1e-10, "residual {residual}");

        let oracle = direct_inverse(&rho);
        let gap = r.sub(&oracle).unwrap().norm(NormKind::L2);
        assert!(gap < 1e-9, "gap to direct solve {gap}");
    }

    fn scalar_model(rho_hi: f64, sigma: f64) -> BrcaModel {
        let g = grid(1);
        BrcaModel::centered(
            g.clone(),
            OperatorSampler::random_kernel(
                LinearOp::identity(g.clone()),
                AmplitudeLaw::uniform(0.0, rho_hi).unwrap(),
            ),
            NoiseSampler::iid_gaussian(g, sigma).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn decompose_with_zero_mean_operator() {
        // rho_bar = 0: N_i = 0 and M_i = Y_i
        let g = grid(3);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::zero(g.clone())),
            NoiseSampler::iid_gaussian(g.clone(), 1.0).unwrap(),
        )
        .unwrap();
        let traj = simulate_recursive(&model, &SimConfig::new(20, 9)).unwrap();
        let cob = decompose(&traj, &LinearOp::zero(g), &NeumannConfig::default()).unwrap();
        for p in &cob.potentials {
            assert_eq!(p.norm(NormKind::Sup), 0.0);
        }
        for (i, m) in cob.increments.iter().enumerate() {
            let gap = m.sub(&traj.centered(i + 1)).unwrap().norm(NormKind::Sup);
            assert!(gap < 1e-13);
        }
        assert!(telescoping_residual(&traj, &cob) < 1e-12);
    }

    #[test]
    fn decompose_scalar_hand_computation() {
        // m=1, rho_bar = 0.5: N_i = Y_i and M_i = 2 Y_i - Y_{i-1}
        let model = scalar_model(1.0, 1.0); // mean amplitude 0.5
        let traj = simulate_recursive(&model, &SimConfig::new(50, 23)).unwrap();
        let rho_bar = model.op_sampler.mean();
        assert_relative_eq!(rho_bar.kernel()[(0, 0)], 0.5, epsilon = 1e-12);
        let cob = decompose(&traj, &rho_bar, &NeumannConfig::default()).unwrap();
        for i in 0..=50 {
            let y = traj.centered(i).values()[0];
            assert_relative_eq!(cob.potentials[i].values()[0], y, epsilon = 1e-9);
        }
        for i in 1..=50usize {
            let y = traj.centered(i).values()[0];
            let y_prev = traj.centered(i - 1).values()[0];
            assert_relative_eq!(
                cob.increments[i - 1].values()[0],
                2.0 * y - y_prev,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn deterministic_noiseless_path_has_zero_increments() {
        // rho ≡ rho_bar and eps ≡ 0 make M_i vanish identically; with the
        // X_0 = mu start the whole path sits at mu, so check directly.
        let g = grid(4);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::scaled_identity(g.clone(), 0.6)),
            NoiseSampler::iid_gaussian(g, 0.0).unwrap(),
        )
        .unwrap();
        let traj = simulate_recursive(&model, &SimConfig::new(10, 2)).unwrap();
        let cob = decompose(
            &traj,
            &model.op_sampler.mean(),
            &NeumannConfig::default(),
        )
        .unwrap();
        for m in &cob.increments {
            assert!(m.norm(NormKind::Sup) < 1e-13);
        }
    }

    #[test]
    fn telescoping_residual_is_small_on_random_models() {
        for (seed, m) in [(1u64, 1usize), (2, 8), (3, 16)] {
            let g = grid(m);
            let model = BrcaModel::new(
                GridFunction::from_fn(g.clone(), |t| t - 0.3),
                OperatorSampler::random_kernel(
                    random_contraction(m, 1.0, seed),
                    AmplitudeLaw::uniform(0.0, 0.8).unwrap(),
                ),
                NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
            )
            .unwrap();
            let traj = simulate_recursive(&model, &SimConfig::new(1000, seed + 40)).unwrap();
            let cob = decompose(
                &traj,
                &model.op_sampler.mean(),
                &NeumannConfig::default(),
            )
            .unwrap();
            let res = telescoping_residual(&traj, &cob);
            assert!(res < 1e-9, "m={m}: residual {res}");
        }
    }

    #[test]
    fn telescoping_scalar_long_path() {
        let model = scalar_model(0.9, 1.0);
        let traj = simulate_recursive(&model, &SimConfig::new(10_000, 71)).unwrap();
        let cob = decompose(
            &traj,
            &model.op_sampler.mean(),
            &NeumannConfig::default(),
        )
        .unwrap();
        assert!(telescoping_residual(&traj, &cob) < 1e-9);
    }

    #[test]
    fn martingale_mean_vanishes_deterministically_without_noise() {
        let g = grid(3);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::scaled_identity(g.clone(), 0.5)),
            NoiseSampler::iid_gaussian(g.clone(), 0.0).unwrap(),
        )
        .unwrap();
        let x_prev = GridFunction::from_fn(g, |t| t);
        let mut op_rng = rng::stream(1, TAG_OPERATOR);
        let mut noise_rng = rng::stream(1, TAG_NOISE);
        let out = martingale_mean_test(
            &model,
            &x_prev,
            2000,
            &NeumannConfig::default(),
            &mut op_rng,
            &mut noise_rng,
        )
        .unwrap();
        // fixed coefficient + zero noise: the increment is deterministic 0
        assert!(out.mean_norm < 1e-12, "mean norm {}", out.mean_norm);
        assert_eq!(out.se, 0.0);
    }

    #[test]
    fn martingale_mean_zero_coefficient_centered_noise() {
        let g = grid(4);
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::zero(g.clone())),
            NoiseSampler::iid_gaussian(g.clone(), 1.0).unwrap(),
        )
        .unwrap();
        let x_prev = GridFunction::constant(g, 0.7);
        let mut op_rng = rng::stream(5, TAG_OPERATOR);
        let mut noise_rng = rng::stream(5, TAG_NOISE);
        let out = martingale_mean_test(
            &model,
            &x_prev,
            10_000,
            &NeumannConfig::default(),
            &mut op_rng,
            &mut noise_rng,
        )
        .unwrap();
        assert!(
            out.mean_norm < 4.0 * out.se,
            "mean {} vs se {}",
            out.mean_norm,
            out.se
        );
    }

    #[test]
    fn martingale_mean_two_regime_plus_gaussian() {
        let g = grid(4);
        let mut seed_rng = rng::stream(77, TAG_OPERATOR);
        let x_prev = GridFunction::new(
            g.clone(),
            (0..4)
                .map(|_| seed_rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
        .unwrap();
        let op_a = random_contraction(4, 0.6, 91);
        let op_b = random_contraction(4, 0.3, 92);
        let model = BrcaModel::centered(
            g,
            OperatorSampler::two_regime(op_a, op_b, 0.35).unwrap(),
            NoiseSampler::iid_gaussian(grid(4), 0.8).unwrap(),
        )
        .unwrap();
        let mut op_rng = rng::stream(6, TAG_OPERATOR);
        let mut noise_rng = rng::stream(6, TAG_NOISE);
        let out = martingale_mean_test(
            &model,
            &x_prev,
            100_000,
            &NeumannConfig::default(),
            &mut op_rng,
            &mut noise_rng,
        )
        .unwrap();
        assert!(
            out.mean_norm < 4.0 * out.se,
            "mean {} vs se {}",
            out.mean_norm,
            out.se
        );
    }

    #[test]
    fn martingale_mean_rejects_small_resamples() {
        let model = scalar_model(0.5, 1.0);
        let x_prev = GridFunction::constant(grid(1), 1.0);
        let mut a = rng::stream(1, TAG_OPERATOR);
        let mut b = rng::stream(1, TAG_NOISE);
        assert!(martingale_mean_test(
            &model,
            &x_prev,
            10,
            &NeumannConfig::default(),
            &mut a,
            &mut b
        )
        .is_err());
    }

    #[test]
    fn increments_are_uncorrelated_and_stationary() {
        // orthogonality: empirical covariance of probe(M_i), probe(M_j), i≠j,
        // across replications stays within 4 SE of zero
        let model = scalar_model(0.8, 1.0);
        let rho_bar = model.op_sampler.mean();
        let reps = 2000;
        let mut prods = Vec::with_capacity(reps);
        let mut firsts = Vec::with_capacity(reps);
        let mut seconds = Vec::with_capacity(reps);
        for r in 0..reps {
            let seed = rng::replication_seed(880, r as u64);
            let traj = simulate_recursive(&model, &SimConfig::new(6, seed)).unwrap();
            let cob = decompose(&traj, &rho_bar, &NeumannConfig::default()).unwrap();
            let a = cob.increments[1].values()[0];
            let b = cob.increments[4].values()[0];
            prods.push(a * b);
            firsts.push(a);
            seconds.push(b);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let cov = mean(&prods) - mean(&firsts) * mean(&seconds);
        let var_prod = prods
            .iter()
            .map(|p| (p - mean(&prods)).powi(2))
            .sum::<f64>()
            / (reps - 1) as f64;
        let se = (var_prod / reps as f64).sqrt();
        assert!(cov.abs() < 4.0 * se, "cov {cov} vs se {se}");

        // stationarity: variance over first and second half of a long path
        let traj = simulate_recursive(&model, &SimConfig::new(20_000, 881)).unwrap();
        let cob = decompose(&traj, &rho_bar, &NeumannConfig::default()).unwrap();
        let vals: Vec<f64> = cob.increments.iter().map(|m| m.values()[0]).collect();
        let (a, b) = vals.split_at(vals.len() / 2);
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let (va, vb) = (var(a), var(b));
        let se_var = ((va.powi(2) + vb.powi(2)) * 2.0 / a.len() as f64).sqrt();
        assert!((va - vb).abs() < 4.0 * se_var, "vars {va} vs {vb}");
    }
}
