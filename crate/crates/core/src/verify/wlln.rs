//! Nuclear-norm law of large numbers for the scaled mean covariance: the
//! distance between `n·Cov(X̄_n)` and the long-run covariance must shrink as
//! `n` grows.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::Result;
use crate::estimate::{longrun_cov, sample_mean, CovOperator};
use crate::process::{simulate_recursive, BrcaModel, SimConfig, DEFAULT_BURNIN};
use crate::rng;

use super::report::{ExperimentReport, MetricRow, Verdict};

#[derive(Debug, Clone)]
pub struct WllnConfig {
    /// Increasing path lengths.
    pub n_list: Vec<usize>,
    /// Replications of `X̄_n` per size.
    pub reps: usize,
    /// Lag budget for the plug-in long-run reference.
    pub lag_budget: usize,
    pub burnin: usize,
    pub seed: u64,
    /// Analytic / oracle long-run covariance; when absent a long-path plug-in
    /// is simulated.
    pub reference: Option<CovOperator>,
    pub ref_path_len: usize,
}

impl WllnConfig {
    pub fn new(n_list: Vec<usize>, reps: usize, seed: u64) -> Self {
        WllnConfig {
            n_list,
            reps,
            lag_budget: 20,
            burnin: DEFAULT_BURNIN,
            seed,
            reference: None,
            ref_path_len: 200_000,
        }
    }
}

pub fn wlln_experiment(model: &BrcaModel, cfg: &WllnConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    super::gate_conditions(model, 2.0, cfg.seed)?;

    let reference = match &cfg.reference {
        Some(r) => r.clone(),
        None => {
            let traj = simulate_recursive(
                model,
                &SimConfig::new(cfg.ref_path_len, rng::replication_seed(cfg.seed, u64::MAX))
                    .with_burnin(cfg.burnin),
            )?;
            longrun_cov(&traj, cfg.lag_budget, traj.mu())?
        }
    };

    let m = model.grid().len();
    let batches = 10usize;
    let mut metrics = Vec::new();
    let mut errors = Vec::new();
    let mut half_widths = Vec::new();
    let mut floors = Vec::new();
    for (size_idx, &n) in cfg.n_list.iter().enumerate() {
        let deviations: Vec<DVector<f64>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| -> Result<DVector<f64>> {
                let seed = rng::replication_seed(cfg.seed, (size_idx * cfg.reps + r) as u64);
                let traj =
                    simulate_recursive(model, &SimConfig::new(n, seed).with_burnin(cfg.burnin))?;
                Ok(sample_mean(&traj).vector() - traj.mu().vector())
            })
            .collect::<Result<Vec<_>>>()?;

        let scaled_cov = |devs: &[DVector<f64>]| -> Result<CovOperator> {
            let mut acc = DMatrix::<f64>::zeros(m, m);
            for d in devs {
                acc.ger(1.0, d, d, 1.0);
            }
            CovOperator::new(
                model.grid().clone(),
                acc * (n as f64 / devs.len() as f64),
            )
        };

        let full = scaled_cov(&deviations)?;
        let err = full.sub(&reference)?.nuclear_norm();

        // estimator noise floor from a split-half contrast: the two halves
        // share the target, so their gap is pure Monte Carlo noise at the
        // scale of the full estimate
        let half = cfg.reps / 2;
        let floor = scaled_cov(&deviations[..half])?
            .sub(&scaled_cov(&deviations[half..])?)?
            .nuclear_norm()
            / 2.0;

        let per_batch = cfg.reps / batches;
        let mut batch_errs = Vec::with_capacity(batches);
        for b in 0..batches {
            let chunk = &deviations[b * per_batch..(b + 1) * per_batch];
            batch_errs.push(scaled_cov(chunk)?.sub(&reference)?.nuclear_norm());
        }
        let bm = batch_errs.iter().sum::<f64>() / batches as f64;
        let bv = batch_errs.iter().map(|v| (v - bm).powi(2)).sum::<f64>()
            / (batches as f64 - 1.0);
        let hw = 2.576 * (bv / batches as f64).sqrt();

        metrics.push(MetricRow::new(n, "nuclear_error", err, hw));
        metrics.push(MetricRow::new(n, "noise_floor", floor, 0.0));
        errors.push(err);
        half_widths.push(hw);
        floors.push(floor);
    }

    let verdict = if cfg.n_list.len() < 2 {
        Verdict::InsufficientSizes
    } else {
        let monotone = errors
            .windows(2)
            .zip(&half_widths)
            .all(|(pair, &hw)| pair[1] <= pair[0] + hw);
        let halved = errors.last().unwrap() < &(0.5 * errors[0]);
        // errors indistinguishable from estimator noise at every size mean
        // the distance to the reference is statistically zero already
        let noise_dominated = errors
            .iter()
            .zip(&floors)
            .all(|(&e, &f)| e <= 2.0 * f);
        if (monotone && halved) || noise_dominated {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };

    Ok(ExperimentReport {
        theorem: "wlln".into(),
        model: model.describe(),
        sizes: cfg.n_list.clone(),
        replications: cfg.reps,
        seed: cfg.seed,
        criterion: "errors nonincreasing within one half-width and final < 0.5 x first, \
                    or all errors within 2x the split-half noise floor"
            .into(),
        metrics,
        verdict,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}
