//! Samplers for the i.i.d. operator coefficients and the innovation noise,
//! plus Monte Carlo diagnostics for the contraction conditions every harness
//! checks before running.
//!
//! Coefficient and noise draws always come from separate substreams of the
//! root seed (see [`crate::rng`]), so independence of the two sequences holds
//! by construction; an empirical cross-correlation check in the test suite
//! acts as a regression tripwire only.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::funspace::{Grid, GridFunction, LinearOp, NormKind, SharedGrid};
use crate::rng::Stream;

/// 99% two-sided normal quantile used for condition half-widths.
const Z99: f64 = 2.5758293035489004;

/// Scalar amplitude law used by the random-kernel sampler kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplitudeLaw {
    Uniform { lo: f64, hi: f64 },
}

impl AmplitudeLaw {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "uniform amplitude needs finite lo <= hi (got [{lo}, {hi}])"
            )));
        }
        Ok(AmplitudeLaw::Uniform { lo, hi })
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match *self {
            AmplitudeLaw::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.gen_range(lo..hi)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            AmplitudeLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// `E |A|^p`, closed form.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match *self {
            AmplitudeLaw::Uniform { lo, hi } => {
                if lo == hi {
                    return lo.abs().powf(p);
                }
                // antiderivative of |a|^p: sign(a) |a|^{p+1} / (p+1)
                let f = |x: f64| x.signum() * x.abs().powf(p + 1.0) / (p + 1.0);
                (f(hi) - f(lo)) / (hi - lo)
            }
        }
    }

    /// Supremum of `|A|` over the support.
    pub fn sup_abs(&self) -> f64 {
        match *self {
            AmplitudeLaw::Uniform { lo, hi } => lo.abs().max(hi.abs()),
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            AmplitudeLaw::Uniform { lo, hi } => (lo, hi),
        }
    }
}

/// I.i.d. sampler for the random operator coefficients.
///
/// Every kind admits a closed-form mean operator and closed-form norm moments
/// (in the `L^2` operator norm), which the oracles and tail bounds rely on.
#[derive(Debug, Clone)]
pub enum OperatorSampler {
    /// Degenerate law: the same operator every draw.
    FixedKernel { op: LinearOp },
    /// `A_n · K_base` with a scalar i.i.d. amplitude.
    RandomKernelIid { base: LinearOp, amplitude: AmplitudeLaw },
    /// `K_a` with probability `prob_a`, else `K_b`.
    TwoRegimeBernoulli {
        op_a: LinearOp,
        op_b: LinearOp,
        prob_a: f64,
    },
    /// `A_n · K_0/‖K_0‖` with amplitude supported in `[0, cap]`, `cap < 1`,
    /// so every draw has operator norm at most `cap` surely.
    ScaledContraction {
        base: LinearOp,
        amplitude: AmplitudeLaw,
        cap: f64,
    },
}

impl OperatorSampler {
    pub fn fixed(op: LinearOp) -> Self {
        OperatorSampler::FixedKernel { op }
    }

    pub fn random_kernel(base: LinearOp, amplitude: AmplitudeLaw) -> Self {
        OperatorSampler::RandomKernelIid { base, amplitude }
    }

    pub fn two_regime(op_a: LinearOp, op_b: LinearOp, prob_a: f64) -> Result<Self> {
        Grid::check_same(op_a.grid(), op_b.grid())?;
        if !(0.0..=1.0).contains(&prob_a) {
            return Err(Error::InvalidArgument(format!(
                "regime probability must lie in [0,1] (got {prob_a})"
            )));
        }
        Ok(OperatorSampler::TwoRegimeBernoulli { op_a, op_b, prob_a })
    }

    /// Normalizes `base` to unit `L^2` operator norm at construction.
    pub fn scaled_contraction(base: LinearOp, amplitude: AmplitudeLaw, cap: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&cap) {
            return Err(Error::InvalidArgument(format!(
                "contraction cap must lie in [0,1) (got {cap})"
            )));
        }
        let (lo, hi) = amplitude.support();
        if lo < 0.0 || hi > cap {
            return Err(Error::InvalidArgument(format!(
                "amplitude support [{lo}, {hi}] must lie within [0, {cap}]"
            )));
        }
        let norm = base.norm(NormKind::L2);
        if norm == 0.0 {
            return Err(Error::InvalidArgument(
                "scaled contraction base kernel must be nonzero".into(),
            ));
        }
        Ok(OperatorSampler::ScaledContraction {
            base: base.scale(1.0 / norm),
            amplitude,
            cap,
        })
    }

    pub fn grid(&self) -> &SharedGrid {
        match self {
            OperatorSampler::FixedKernel { op } => op.grid(),
            OperatorSampler::RandomKernelIid { base, .. } => base.grid(),
            OperatorSampler::TwoRegimeBernoulli { op_a, .. } => op_a.grid(),
            OperatorSampler::ScaledContraction { base, .. } => base.grid(),
        }
    }

    /// One i.i.d. draw.
    pub fn sample(&self, rng: &mut Stream) -> LinearOp {
        match self {
            OperatorSampler::FixedKernel { op } => op.clone(),
            OperatorSampler::RandomKernelIid { base, amplitude } => {
                base.scale(amplitude.sample(rng))
            }
            OperatorSampler::TwoRegimeBernoulli { op_a, op_b, prob_a } => {
                if rng.gen::<f64>() < *prob_a {
                    op_a.clone()
                } else {
                    op_b.clone()
                }
            }
            OperatorSampler::ScaledContraction { base, amplitude, .. } => {
                base.scale(amplitude.sample(rng))
            }
        }
    }

    /// The mean operator, always in closed form (never Monte Carlo).
    pub fn mean(&self) -> LinearOp {
        match self {
            OperatorSampler::FixedKernel { op } => op.clone(),
            OperatorSampler::RandomKernelIid { base, amplitude } => base.scale(amplitude.mean()),
            OperatorSampler::TwoRegimeBernoulli { op_a, op_b, prob_a } => op_a
                .scale(*prob_a)
                .add(&op_b.scale(1.0 - prob_a))
                .expect("regimes share a grid"),
            OperatorSampler::ScaledContraction { base, amplitude, .. } => {
                base.scale(amplitude.mean())
            }
        }
    }

    /// Closed-form `E ‖ρ‖^p` in the `L^2` operator norm.
    pub fn norm_moment(&self, p: f64) -> f64 {
        match self {
            OperatorSampler::FixedKernel { op } => op.norm(NormKind::L2).powf(p),
            OperatorSampler::RandomKernelIid { base, amplitude } => {
                amplitude.abs_moment(p) * base.norm(NormKind::L2).powf(p)
            }
            OperatorSampler::TwoRegimeBernoulli { op_a, op_b, prob_a } => {
                prob_a * op_a.norm(NormKind::L2).powf(p)
                    + (1.0 - prob_a) * op_b.norm(NormKind::L2).powf(p)
            }
            // base is unit norm by construction
            OperatorSampler::ScaledContraction { amplitude, .. } => amplitude.abs_moment(p),
        }
    }

    /// A sure upper bound on `‖ρ‖` over the support of the law.
    pub fn sup_norm_bound(&self) -> f64 {
        match self {
            OperatorSampler::FixedKernel { op } => op.norm(NormKind::L2),
            OperatorSampler::RandomKernelIid { base, amplitude } => {
                amplitude.sup_abs() * base.norm(NormKind::L2)
            }
            OperatorSampler::TwoRegimeBernoulli { op_a, op_b, .. } => {
                op_a.norm(NormKind::L2).max(op_b.norm(NormKind::L2))
            }
            OperatorSampler::ScaledContraction { amplitude, .. } => amplitude.sup_abs(),
        }
    }

    fn is_deterministic(&self) -> bool {
        match self {
            OperatorSampler::FixedKernel { .. } => true,
            OperatorSampler::RandomKernelIid { amplitude, .. }
            | OperatorSampler::ScaledContraction { amplitude, .. } => {
                let (lo, hi) = amplitude.support();
                lo == hi
            }
            OperatorSampler::TwoRegimeBernoulli { prob_a, .. } => {
                *prob_a == 0.0 || *prob_a == 1.0
            }
        }
    }
}

impl fmt::Display for OperatorSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorSampler::FixedKernel { op } => {
                write!(f, "fixed(|K|2={:.3})", op.norm(NormKind::L2))
            }
            OperatorSampler::RandomKernelIid { base, amplitude } => write!(
                f,
                "random_kernel(|K|2={:.3}, amp={amplitude:?})",
                base.norm(NormKind::L2)
            ),
            OperatorSampler::TwoRegimeBernoulli { op_a, op_b, prob_a } => write!(
                f,
                "two_regime(|Ka|2={:.3}, |Kb|2={:.3}, q={prob_a})",
                op_a.norm(NormKind::L2),
                op_b.norm(NormKind::L2)
            ),
            OperatorSampler::ScaledContraction { amplitude, cap, .. } => {
                write!(f, "scaled_contraction(cap={cap}, amp={amplitude:?})")
            }
        }
    }
}

/// Covariance kernels for the Gaussian-process noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovKernel {
    /// `c(t,s) = exp(-|t-s| / length)`
    Exponential { length: f64 },
    /// `c(t,s) = min(t,s)`
    BrownianMotion,
    /// `c(t,s) = exp(-(t-s)^2 / (2 length^2))`; often numerically rank
    /// deficient after discretization, in which case construction fails.
    SquaredExponential { length: f64 },
}

impl CovKernel {
    fn eval(&self, t: f64, s: f64) -> f64 {
        match *self {
            CovKernel::Exponential { length } => (-(t - s).abs() / length).exp(),
            CovKernel::BrownianMotion => t.min(s),
            CovKernel::SquaredExponential { length } => {
                (-(t - s).powi(2) / (2.0 * length * length)).exp()
            }
        }
    }
}

/// I.i.d. mean-zero innovation sampler.
#[derive(Debug, Clone)]
pub enum NoiseSampler {
    /// Mean-zero Gaussian process with the given covariance kernel.
    GaussianProcess {
        grid: SharedGrid,
        kernel: CovKernel,
        chol: DMatrix<f64>,
    },
    /// Independent `N(0, sigma^2)` at every node.
    IidGridGaussian { grid: SharedGrid, sigma: f64 },
    /// Independent `U[-bound, bound]` at every node.
    BoundedUniform { grid: SharedGrid, bound: f64 },
}

impl NoiseSampler {
    /// Discretizes the covariance kernel and takes its Cholesky factor.
    /// Fails if the discretized kernel is not positive definite.
    pub fn gaussian_process(grid: SharedGrid, kernel: CovKernel) -> Result<Self> {
        let m = grid.len();
        let pts = grid.points().to_vec();
        let cov = DMatrix::from_fn(m, m, |i, j| kernel.eval(pts[i], pts[j]));
        let chol = Cholesky::new(cov).ok_or_else(|| {
            Error::ModelConfig(format!(
                "noise covariance kernel {kernel:?} is not positive definite after \
                 discretization on {m} nodes"
            ))
        })?;
        Ok(NoiseSampler::GaussianProcess {
            grid,
            kernel,
            chol: chol.l(),
        })
    }

    pub fn iid_gaussian(grid: SharedGrid, sigma: f64) -> Result<Self> {
        if sigma < 0.0 {
            return Err(Error::InvalidArgument("noise sigma must be >= 0".into()));
        }
        Ok(NoiseSampler::IidGridGaussian { grid, sigma })
    }

    pub fn bounded_uniform(grid: SharedGrid, bound: f64) -> Result<Self> {
        if bound < 0.0 {
            return Err(Error::InvalidArgument("noise bound must be >= 0".into()));
        }
        Ok(NoiseSampler::BoundedUniform { grid, bound })
    }

    pub fn grid(&self) -> &SharedGrid {
        match self {
            NoiseSampler::GaussianProcess { grid, .. }
            | NoiseSampler::IidGridGaussian { grid, .. }
            | NoiseSampler::BoundedUniform { grid, .. } => grid,
        }
    }

    /// One i.i.d. mean-zero draw.
    pub fn sample(&self, rng: &mut Stream) -> GridFunction {
        match self {
            NoiseSampler::GaussianProcess { grid, chol, .. } => {
                let z = DVector::from_iterator(
                    grid.len(),
                    (0..grid.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
                );
                GridFunction::from_vector(grid.clone(), chol * z)
            }
            NoiseSampler::IidGridGaussian { grid, sigma } => {
                let v = DVector::from_iterator(
                    grid.len(),
                    (0..grid.len()).map(|_| *sigma * rng.sample::<f64, _>(StandardNormal)),
                );
                GridFunction::from_vector(grid.clone(), v)
            }
            NoiseSampler::BoundedUniform { grid, bound } => {
                let b = *bound;
                let v = DVector::from_iterator(
                    grid.len(),
                    (0..grid.len()).map(|_| if b == 0.0 { 0.0 } else { rng.gen_range(-b..b) }),
                );
                GridFunction::from_vector(grid.clone(), v)
            }
        }
    }

    /// Exact covariance matrix of one draw in kernel coordinates,
    /// `E[ε(t_i) ε(t_j)]`.
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let m = self.grid().len();
        match self {
            NoiseSampler::GaussianProcess { grid, kernel, .. } => {
                let pts = grid.points().to_vec();
                DMatrix::from_fn(m, m, |i, j| kernel.eval(pts[i], pts[j]))
            }
            NoiseSampler::IidGridGaussian { sigma, .. } => {
                DMatrix::from_diagonal_element(m, m, sigma * sigma)
            }
            NoiseSampler::BoundedUniform { bound, .. } => {
                DMatrix::from_diagonal_element(m, m, bound * bound / 3.0)
            }
        }
    }

    /// Closed-form `E ‖ε‖_2^2` in the weighted norm.
    pub fn second_moment(&self) -> f64 {
        match self {
            NoiseSampler::GaussianProcess { grid, kernel, .. } => grid
                .points()
                .iter()
                .zip(grid.weights())
                .map(|(&t, &w)| w * kernel.eval(t, t))
                .sum(),
            NoiseSampler::IidGridGaussian { sigma, .. } => sigma * sigma,
            NoiseSampler::BoundedUniform { bound, .. } => bound * bound / 3.0,
        }
    }

    /// Sure bound on the sup norm of a draw, when the law is bounded.
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            NoiseSampler::BoundedUniform { bound, .. } => Some(*bound),
            _ => None,
        }
    }

    /// True when every draw is identically zero.
    pub fn is_degenerate_zero(&self) -> bool {
        match self {
            NoiseSampler::IidGridGaussian { sigma, .. } => *sigma == 0.0,
            NoiseSampler::BoundedUniform { bound, .. } => *bound == 0.0,
            NoiseSampler::GaussianProcess { .. } => false,
        }
    }
}

impl fmt::Display for NoiseSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSampler::GaussianProcess { kernel, .. } => write!(f, "gp({kernel:?})"),
            NoiseSampler::IidGridGaussian { sigma, .. } => write!(f, "iid_gaussian(sigma={sigma})"),
            NoiseSampler::BoundedUniform { bound, .. } => write!(f, "bounded_uniform(b={bound})"),
        }
    }
}

/// A Monte Carlo point estimate with a confidence half-width.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
}

impl Estimate {
    fn from_samples(samples: &[f64]) -> Estimate {
        let n = samples.len() as f64;
        if samples.iter().any(|v| *v == f64::NEG_INFINITY) {
            // ln‖ρ‖ of an exactly zero draw; the criterion holds trivially.
            return Estimate {
                value: f64::NEG_INFINITY,
                half_width: 0.0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Estimate {
            value: mean,
            half_width: Z99 * (var / n).sqrt(),
        }
    }

    fn exact(value: f64) -> Estimate {
        Estimate {
            value,
            half_width: 0.0,
        }
    }
}

/// Monte Carlo diagnostics for the stationarity conditions.
///
/// Verdicts are conservative: a condition counts as holding only when the
/// estimate plus its 99% half-width clears the threshold, so harnesses never
/// run on a model whose hypotheses are uncertain.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConditionReport {
    pub p: f64,
    /// `E ‖ρ‖^p` estimate.
    pub norm_moment: Estimate,
    /// `E ln ‖ρ‖` estimate.
    pub log_norm: Estimate,
    /// Max of `‖ρ‖` over the draws; a sure bound only when `sup_exact`.
    pub sup_norm: f64,
    /// True only for the scaled-contraction kind, whose bound holds surely.
    pub sup_exact: bool,
    /// `E ‖ρ‖^p < 1` including the confidence margin.
    pub c3_holds: bool,
    /// `E ln ‖ρ‖ < 0` including the confidence margin.
    pub log_criterion_holds: bool,
    /// Sure sup-norm bound below one (certified for scaled contractions).
    pub delta_lt_one: bool,
    pub n_mc: usize,
}

/// Estimates `E ‖ρ‖^p` and `E ln ‖ρ‖` over `n_mc` draws (operator norms taken
/// in `L^2`) and renders conservative verdicts. Deterministic kinds are
/// evaluated exactly with zero half-width.
pub fn diagnose_conditions(
    sampler: &OperatorSampler,
    p: f64,
    n_mc: usize,
    rng: &mut Stream,
) -> Result<ConditionReport> {
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("p must be >= 1 (got {p})")));
    }
    if n_mc < 100 {
        return Err(Error::InvalidArgument(format!(
            "n_mc must be >= 100 (got {n_mc})"
        )));
    }

    let (norm_moment, log_norm, sup_norm) = if sampler.is_deterministic() {
        let norm = sampler.sample(rng).norm(NormKind::L2);
        (
            Estimate::exact(norm.powf(p)),
            Estimate::exact(norm.ln()),
            norm,
        )
    } else {
        let mut powers = Vec::with_capacity(n_mc);
        let mut logs = Vec::with_capacity(n_mc);
        let mut sup = 0.0f64;
        for _ in 0..n_mc {
            let norm = sampler.sample(rng).norm(NormKind::L2);
            powers.push(norm.powf(p));
            logs.push(norm.ln());
            sup = sup.max(norm);
        }
        (
            Estimate::from_samples(&powers),
            Estimate::from_samples(&logs),
            sup,
        )
    };

    let sup_exact = matches!(sampler, OperatorSampler::ScaledContraction { .. });
    let sure_bound = sampler.sup_norm_bound();
    Ok(ConditionReport {
        p,
        c3_holds: norm_moment.value + norm_moment.half_width < 1.0,
        log_criterion_holds: log_norm.value + log_norm.half_width < 0.0,
        delta_lt_one: sup_exact && sure_bound < 1.0,
        norm_moment,
        log_norm,
        sup_norm: if sup_exact { sure_bound } else { sup_norm },
        sup_exact,
        n_mc,
    })
}
