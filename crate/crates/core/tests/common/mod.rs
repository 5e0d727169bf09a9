//! Shared oracles and model builders for the integration suites.
//!
//! The covariance oracles here are closed-form: the stationary covariance
//! solves the coefficient-averaged Lyapunov fixed point by iteration, and the
//! lag sum applies the resolvent of the mean action matrix. They never touch
//! the estimator code paths they are used to check.

use brca_core::coeffgen::{AmplitudeLaw, NoiseSampler, OperatorSampler};
use brca_core::estimate::CovOperator;
use brca_core::funspace::{Grid, LinearOp, NormKind, SharedGrid};
use brca_core::process::BrcaModel;
use nalgebra::DMatrix;

pub fn grid(m: usize) -> SharedGrid {
    Grid::uniform(m).unwrap()
}

/// Matrix acting on value vectors: `M = K · diag(w)`.
pub fn action_matrix(op: &LinearOp) -> DMatrix<f64> {
    let m = op.grid().len();
    let w = op.grid().weights();
    DMatrix::from_fn(m, m, |i, j| op.kernel()[(i, j)] * w[j])
}

/// One application of the coefficient-averaged conjugation
/// `C ↦ E[ρ C ρ*]` in closed form.
fn conjugation_step(sampler: &OperatorSampler, c: &DMatrix<f64>) -> DMatrix<f64> {
    match sampler {
        OperatorSampler::FixedKernel { op } => {
            let m = action_matrix(op);
            &m * c * m.transpose()
        }
        OperatorSampler::RandomKernelIid { base, amplitude } => {
            let m = action_matrix(base);
            (&m * c * m.transpose()) * amplitude.abs_moment(2.0)
        }
        OperatorSampler::TwoRegimeBernoulli { op_a, op_b, prob_a } => {
            let ma = action_matrix(op_a);
            let mb = action_matrix(op_b);
            (&ma * c * ma.transpose()) * *prob_a + (&mb * c * mb.transpose()) * (1.0 - prob_a)
        }
        OperatorSampler::ScaledContraction { base, amplitude, .. } => {
            let m = action_matrix(base);
            (&m * c * m.transpose()) * amplitude.abs_moment(2.0)
        }
    }
}

/// Stationary covariance of the centered process (kernel coordinates) from
/// the fixed point `C = E[ρ C ρ*] + C_ε`, iterated to machine precision.
pub fn analytic_stationary_cov(model: &BrcaModel) -> DMatrix<f64> {
    let c_eps = model.noise_sampler.covariance_matrix();
    let mut total = c_eps.clone();
    let mut term = c_eps.clone();
    for _ in 0..200_000 {
        term = conjugation_step(&model.op_sampler, &term);
        let gain = term.norm();
        total += &term;
        if gain < 1e-16 * total.norm() {
            break;
        }
    }
    total
}

/// Long-run covariance `Σ_h C_h` in closed form:
/// `C_0 + B C_0 + C_0 Bᵀ` with `B = (I - M̄)^{-1} - I` for the mean action
/// `M̄`, using `C_h = C_0 (M̄^h)ᵀ` for positive lags.
pub fn analytic_longrun(model: &BrcaModel) -> CovOperator {
    let c0 = analytic_stationary_cov(model);
    let mean_action = action_matrix(&model.op_sampler.mean());
    let m = mean_action.nrows();
    let resolvent = (DMatrix::<f64>::identity(m, m) - &mean_action)
        .try_inverse()
        .expect("mean action is a contraction");
    let b = resolvent - DMatrix::<f64>::identity(m, m);
    let lr = &c0 + &b * &c0 + &c0 * b.transpose();
    CovOperator::new(model.grid().clone(), lr).unwrap()
}

/// Smooth non-symmetric kernel scaled to a given operator norm.
pub fn smooth_kernel(g: &SharedGrid, norm: f64) -> LinearOp {
    let raw = LinearOp::from_fn(g.clone(), |t, s| {
        (-((t - s) * (t - s)) / 0.08).exp() + 0.3 * (1.0 + t) * (1.0 - s)
    });
    raw.scale(norm / raw.norm(NormKind::L2))
}

/// Scalar workhorse: `rho ~ U[0, rho_hi]` times the identity, iid Gaussian
/// noise.
pub fn scalar_model(rho_hi: f64, sigma: f64) -> BrcaModel {
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

/// Vector-valued model with a random smooth kernel and iid Gaussian noise.
pub fn random_kernel_model(m: usize, amp_hi: f64, sigma: f64) -> BrcaModel {
    let g = grid(m);
    BrcaModel::centered(
        g.clone(),
        OperatorSampler::random_kernel(
            smooth_kernel(&g, 1.0),
            AmplitudeLaw::uniform(0.0, amp_hi).unwrap(),
        ),
        NoiseSampler::iid_gaussian(g, sigma).unwrap(),
    )
    .unwrap()
}

/// Model with the coefficient identically zero (iid observations).
pub fn iid_model(m: usize, sigma: f64) -> BrcaModel {
    let g = grid(m);
    BrcaModel::centered(
        g.clone(),
        OperatorSampler::fixed(LinearOp::zero(g.clone())),
        NoiseSampler::iid_gaussian(g, sigma).unwrap(),
    )
    .unwrap()
}

/// Non-contractive model that every harness must refuse.
pub fn expanding_model(m: usize) -> BrcaModel {
    let g = grid(m);
    BrcaModel::centered(
        g.clone(),
        OperatorSampler::fixed(LinearOp::scaled_identity(g.clone(), 1.1)),
        NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
    )
    .unwrap()
}
