//! Exponential-moment equivalence under a sure contraction bound: the
//! stationary state has finite exponential moments exactly when the noise
//! does. The harness checks stability of the estimates across independent
//! half-batches, a deterministic support ceiling, and the domination
//! inequality `E exp(α‖ε‖) <= E exp(2α‖X‖)` at `α = γ/2`.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::funspace::NormKind;
use crate::process::{simulate_recursive, BrcaModel, SimConfig, DEFAULT_BURNIN};
use crate::rng::{self, TAG_AUX};

use super::report::{ExperimentReport, MetricRow, Verdict};

#[derive(Debug, Clone)]
pub struct ExpMomentConfig {
    pub gamma_list: Vec<f64>,
    pub reps: usize,
    pub burnin: usize,
    pub seed: u64,
}

impl ExpMomentConfig {
    pub fn new(gamma_list: Vec<f64>, reps: usize, seed: u64) -> Self {
        ExpMomentConfig {
            gamma_list,
            reps,
            burnin: DEFAULT_BURNIN,
            seed,
        }
    }
}

pub fn exp_moment_experiment(
    model: &BrcaModel,
    cfg: &ExpMomentConfig,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let contraction = model.op_sampler.sup_norm_bound();
    if !(contraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "exp-moment harness needs a surely bounded contraction (sup bound {contraction:.3})"
        )));
    }
    let noise_bound = model.noise_sampler.sup_bound().ok_or_else(|| {
        Error::InvalidArgument("exp-moment harness needs sure-bounded noise".into())
    })?;
    super::gate_conditions(model, 1.0, cfg.seed)?;

    // stationary draws of the centered state (one per replication)
    let x_norms: Vec<f64> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let seed = rng::replication_seed(cfg.seed, r as u64);
            let traj =
                simulate_recursive(model, &SimConfig::new(1, seed).with_burnin(cfg.burnin))?;
            Ok(traj.centered(1).norm(NormKind::L2))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut noise_rng = rng::stream(cfg.seed, TAG_AUX);
    let eps_norms: Vec<f64> = (0..cfg.reps)
        .map(|_| model.noise_sampler.sample(&mut noise_rng).norm(NormKind::L2))
        .collect();

    let stats = |vals: &[f64]| {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    };

    let mut metrics = Vec::new();
    let mut verdict = Verdict::Pass;
    for &gamma in &cfg.gamma_list {
        if gamma < 0.0 {
            return Err(Error::InvalidArgument("gamma must be >= 0".into()));
        }
        let exp_x: Vec<f64> = x_norms.iter().map(|v| (gamma * v).exp()).collect();
        let exp_eps_half: Vec<f64> =
            eps_norms.iter().map(|v| (0.5 * gamma * v).exp()).collect();

        let (mean_x, se_x) = stats(&exp_x);
        let (half_a, _) = stats(&exp_x[..cfg.reps / 2]);
        let (half_b, _) = stats(&exp_x[cfg.reps / 2..]);
        let rel_gap = (half_a - half_b).abs() / (0.5 * (half_a + half_b));
        let support_ceiling = (gamma * noise_bound / (1.0 - contraction)).exp();
        let (mean_eps, se_eps) = stats(&exp_eps_half);

        metrics.push(MetricRow::new(cfg.reps, format!("exp_moment_x_g{gamma}"), mean_x, 2.576 * se_x));
        metrics.push(MetricRow::new(
            cfg.reps,
            format!("half_batch_gap_g{gamma}"),
            rel_gap,
            0.0,
        ));
        metrics.push(MetricRow::new(
            cfg.reps,
            format!("support_ceiling_g{gamma}"),
            support_ceiling,
            0.0,
        ));
        metrics.push(MetricRow::new(
            cfg.reps,
            format!("exp_moment_eps_half_g{gamma}"),
            mean_eps,
            2.576 * se_eps,
        ));

        if rel_gap >= 0.10 {
            verdict = Verdict::Fail;
        }
        if mean_x > support_ceiling {
            verdict = Verdict::Fail;
        }
        // domination direction, with Monte Carlo slack
        let combined_se = (se_x.powi(2) + se_eps.powi(2)).sqrt();
        if mean_eps > mean_x + 3.0 * combined_se {
            verdict = Verdict::Fail;
        }
    }

    Ok(ExperimentReport {
        theorem: "exp_moment".into(),
        model: model.describe(),
        sizes: vec![cfg.reps],
        replications: cfg.reps,
        seed: cfg.seed,
        criterion: "half-batches within 10%, estimates under the support ceiling, \
                    E exp(a|eps|) <= E exp(2a|X|) + 3 SE"
            .into(),
        metrics,
        verdict,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffgen::{AmplitudeLaw, NoiseSampler, OperatorSampler};
    use crate::funspace::{Grid, LinearOp};

    fn contraction_model(cap: f64, bound: f64, m: usize) -> BrcaModel {
        let g = Grid::uniform(m).unwrap();
        BrcaModel::centered(
            g.clone(),
            OperatorSampler::scaled_contraction(
                LinearOp::from_fn(g.clone(), |t, s| 1.0 + t * s),
                AmplitudeLaw::uniform(0.0, cap).unwrap(),
                cap,
            )
            .unwrap(),
            NoiseSampler::bounded_uniform(g, bound).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn gamma_zero_gives_unit_moments() {
        let model = contraction_model(0.5, 1.0, 4);
        let mut cfg = ExpMomentConfig::new(vec![0.0], 400, 9);
        cfg.burnin = 60;
        let rep = exp_moment_experiment(&model, &cfg).unwrap();
        let x_row = rep
            .metrics
            .iter()
            .find(|r| r.metric == "exp_moment_x_g0")
            .unwrap();
        assert_eq!(x_row.value, 1.0);
        assert!(rep.passed());
    }

    #[test]
    fn zero_noise_gives_unit_moments() {
        // the path never leaves the mean, so both exponential moments are
        // exactly one for every gamma
        let model = contraction_model(0.5, 0.0, 3);
        let mut cfg = ExpMomentConfig::new(vec![0.5, 1.0], 200, 4);
        cfg.burnin = 20;
        let rep = exp_moment_experiment(&model, &cfg).unwrap();
        assert!(rep.passed());
        for row in rep.metrics.iter().filter(|r| r.metric.starts_with("exp_moment")) {
            assert_eq!(row.value, 1.0, "{}", row.metric);
        }
    }

    #[test]
    fn unbounded_noise_is_rejected() {
        let g = Grid::uniform(2).unwrap();
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::scaled_contraction(
                LinearOp::identity(g.clone()),
                AmplitudeLaw::uniform(0.0, 0.5).unwrap(),
                0.5,
            )
            .unwrap(),
            NoiseSampler::iid_gaussian(g, 1.0).unwrap(),
        )
        .unwrap();
        let cfg = ExpMomentConfig::new(vec![1.0], 100, 9);
        assert!(exp_moment_experiment(&model, &cfg).is_err());
    }

    #[test]
    fn unbounded_coefficient_kind_is_rejected() {
        let g = Grid::uniform(2).unwrap();
        let model = BrcaModel::centered(
            g.clone(),
            OperatorSampler::fixed(LinearOp::identity(g.clone())),
            NoiseSampler::bounded_uniform(g, 1.0).unwrap(),
        )
        .unwrap();
        let cfg = ExpMomentConfig::new(vec![1.0], 100, 9);
        assert!(exp_moment_experiment(&model, &cfg).is_err());
    }

    #[test]
    fn moderate_contraction_passes_with_ceiling() {
        let model = contraction_model(0.5, 1.0, 4);
        let mut cfg = ExpMomentConfig::new(vec![0.5, 1.0], 2000, 10);
        cfg.burnin = 80;
        let rep = exp_moment_experiment(&model, &cfg).unwrap();
        assert!(rep.passed(), "{:?}", rep.metrics);
        let est = rep
            .metrics
            .iter()
            .find(|r| r.metric == "exp_moment_x_g1")
            .unwrap()
            .value;
        assert!(est < (2.0f64).exp(), "estimate {est} above exp(2)");
    }
}
