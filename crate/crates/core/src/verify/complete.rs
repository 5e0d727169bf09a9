//! Complete convergence: the tail series
//! `Σ_n n^{αp-2} P(max_{k<=n} ‖S_k‖ >= ε n^α)` must be summable. Dyadic
//! blocks suffice because the running maximum is monotone, so the harness
//! estimates the exceedance probability on a dyadic grid and condenses the
//! series into per-block sums.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::funspace::{GridFunction, NormKind};
use crate::process::{simulate_fold, BrcaModel, DEFAULT_BURNIN};
use crate::rng;

use super::report::{ExperimentReport, MetricRow, Verdict};

#[derive(Debug, Clone)]
pub struct CompleteConfig {
    pub alpha: f64,
    pub p: f64,
    pub eps: f64,
    /// Paths run to the largest power of two not exceeding this.
    pub n_max: usize,
    pub reps: usize,
    pub burnin: usize,
    pub seed: u64,
    /// Block-ratio checks apply from this dyadic exponent on.
    pub ratio_from: u32,
}

impl CompleteConfig {
    pub fn new(alpha: f64, p: f64, eps: f64, n_max: usize, reps: usize, seed: u64) -> Self {
        CompleteConfig {
            alpha,
            p,
            eps,
            n_max,
            reps,
            burnin: DEFAULT_BURNIN,
            seed,
            ratio_from: 6,
        }
    }
}

pub fn complete_convergence_experiment(
    model: &BrcaModel,
    cfg: &CompleteConfig,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    if !(cfg.p > 1.0 && cfg.p < 2.0) {
        return Err(Error::InvalidArgument(format!(
            "complete convergence needs p in (1,2), got {}",
            cfg.p
        )));
    }
    if !(1.0 <= 1.0 / cfg.alpha && 1.0 / cfg.alpha <= cfg.p) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {} violates 1 <= 1/alpha <= p = {}",
            cfg.alpha, cfg.p
        )));
    }
    if cfg.eps <= 0.0 {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if model.mu.norm(NormKind::Sup) != 0.0 {
        return Err(Error::InvalidArgument(
            "complete convergence harness needs a centered model (mu = 0)".into(),
        ));
    }
    super::gate_conditions(model, cfg.p, cfg.seed)?;

    let mut dyadic = Vec::new();
    let mut n = 2usize;
    while n <= cfg.n_max {
        dyadic.push(n);
        n *= 2;
    }
    if dyadic.len() < 2 {
        return Err(Error::InvalidArgument("n_max must be at least 4".into()));
    }
    let n_last = *dyadic.last().unwrap();

    // per replication: running max of ‖S_k‖ sampled at each dyadic checkpoint
    let maxes: Vec<Vec<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let seed = rng::replication_seed(cfg.seed, r as u64);
            let m = model.grid().len();
            let mut partial = DVector::<f64>::zeros(m);
            let mut peak = 0.0f64;
            let mut out = Vec::with_capacity(dyadic.len());
            let mut next = 0usize;
            simulate_fold(model, n_last, cfg.burnin, seed, |i, x| {
                if i >= 1 {
                    partial += x.vector();
                    let norm = GridFunction::from_vector(model.grid().clone(), partial.clone())
                        .norm(NormKind::L2);
                    peak = peak.max(norm);
                    if next < dyadic.len() && i == dyadic[next] {
                        out.push(peak);
                        next += 1;
                    }
                }
            })?;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let exponent = cfg.alpha * cfg.p - 2.0;
    let mut metrics = Vec::new();
    let mut blocks = Vec::new();
    let mut probs = Vec::new();
    for (j, &nj) in dyadic.iter().enumerate() {
        let threshold = cfg.eps * (nj as f64).powf(cfg.alpha);
        let hits = maxes.iter().filter(|row| row[j] >= threshold).count();
        let p_hat = hits as f64 / cfg.reps as f64;
        let hw = 2.576 * (p_hat * (1.0 - p_hat) / cfg.reps as f64).sqrt();
        // condensed block weight Σ_{n in [2^j, 2^{j+1})} n^{αp-2}
        let weight: f64 = (nj..2 * nj).map(|k| (k as f64).powf(exponent)).sum();
        let block = weight * p_hat;
        metrics.push(MetricRow::new(nj, "exceedance_prob", p_hat, hw));
        metrics.push(MetricRow::new(nj, "block_sum", block, weight * hw));
        blocks.push(block);
        probs.push(p_hat);
    }

    // noise floor: exceedance counts too small to resolve a ratio
    let floor = 5.0 / cfg.reps as f64;
    let mut verdict = Verdict::Pass;
    for j in 0..dyadic.len() - 1 {
        let exp_j = dyadic[j].trailing_zeros();
        if exp_j < cfg.ratio_from {
            continue;
        }
        if probs[j] <= floor || probs[j + 1] <= floor {
            continue;
        }
        if blocks[j + 1] > 0.5 * blocks[j] {
            verdict = Verdict::Fail;
        }
    }

    Ok(ExperimentReport {
        theorem: "complete_convergence".into(),
        model: model.describe(),
        sizes: dyadic,
        replications: cfg.reps,
        seed: cfg.seed,
        criterion: format!(
            "dyadic block sums halve per block beyond n = 2^{} (above the {:.1e} count floor)",
            cfg.ratio_from, floor
        ),
        metrics,
        verdict,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}
