//! Strong law of large numbers along a single path: `‖X̄_n - mu‖` recorded at
//! increasing checkpoints must fall at roughly the square-root rate.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::estimate::longrun_cov;
use crate::funspace::{GridFunction, NormKind};
use crate::process::{simulate_fold, simulate_recursive, BrcaModel, SimConfig, DEFAULT_BURNIN};
use crate::rng;

use super::report::{ExperimentReport, MetricRow, Verdict};

#[derive(Debug, Clone)]
pub struct SllnConfig {
    /// Increasing checkpoints; the path runs to the last one.
    pub n_list: Vec<usize>,
    pub burnin: usize,
    pub seed: u64,
    pub lag_budget: usize,
    pub ref_path_len: usize,
}

impl SllnConfig {
    pub fn new(n_list: Vec<usize>, seed: u64) -> Self {
        SllnConfig {
            n_list,
            burnin: DEFAULT_BURNIN,
            seed,
            lag_budget: 20,
            ref_path_len: 100_000,
        }
    }
}

pub fn slln_experiment(model: &BrcaModel, cfg: &SllnConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    super::gate_conditions(model, 1.0, cfg.seed)?;
    if cfg.n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "slln checkpoints must be strictly increasing".into(),
        ));
    }
    let n_last = *cfg.n_list.last().expect("nonempty checkpoint list");

    // reference scale: weighted trace of the long-run covariance
    let trace = {
        let traj = simulate_recursive(
            model,
            &SimConfig::new(cfg.ref_path_len, rng::replication_seed(cfg.seed, u64::MAX))
                .with_burnin(cfg.burnin),
        )?;
        longrun_cov(&traj, cfg.lag_budget, traj.mu())?.trace()
    };

    let m = model.grid().len();
    let mut running = DVector::<f64>::zeros(m);
    let mut recorded = Vec::with_capacity(cfg.n_list.len());
    let mut next = 0usize;
    simulate_fold(model, n_last, cfg.burnin, cfg.seed, |i, x| {
        if i >= 1 {
            running += x.vector();
            if next < cfg.n_list.len() && i == cfg.n_list[next] {
                let mean = GridFunction::from_vector(model.grid().clone(), &running / i as f64);
                recorded.push(mean.sub(&model.mu).expect("shared grid").norm(NormKind::L2));
                next += 1;
            }
        }
    })?;

    let metrics: Vec<MetricRow> = cfg
        .n_list
        .iter()
        .zip(&recorded)
        .map(|(&n, &v)| MetricRow::new(n, "mean_gap", v, 0.0))
        .collect();

    let verdict = if cfg.n_list.len() < 2 {
        Verdict::InsufficientSizes
    } else {
        let first = recorded[0];
        let last = *recorded.last().unwrap();
        let threshold = 4.0 * (trace / n_last as f64).sqrt();
        if first == 0.0 && last == 0.0 {
            Verdict::DegeneratePass
        } else if last < first / 4.0 && last < threshold {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };

    Ok(ExperimentReport {
        theorem: "slln".into(),
        model: model.describe(),
        sizes: cfg.n_list.clone(),
        replications: 1,
        seed: cfg.seed,
        criterion: "last gap < first/4 and < 4 sqrt(trace(longrun)/n_last)".into(),
        metrics,
        verdict,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}
