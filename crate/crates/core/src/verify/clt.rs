//! Central limit theorem for the scaled sample mean.
//!
//! For fixed probe functionals `x* = ⟨·, g⟩_w` the scalar samples
//! `√n ⟨X̄_n - mu, g⟩` are tested against a mean-zero normal whose variance
//! comes from the covariance operator of the martingale increments. Two
//! structural cross-checks ride along: the coboundary term must be negligible
//! at the `1/√n` scale, and the increment-based probe variance must agree
//! with the triangular-sum route estimated from the replications themselves.
//!
//! Probes are fixed a priori (constant plus the first two Fourier modes),
//! never data-chosen, so the KS calibration stays valid.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::CovOperator;
use crate::funspace::{GridFunction, NormKind, SharedGrid};
use crate::martingale::{neumann_inverse, NeumannConfig};
use crate::process::{simulate_recursive, BrcaModel, SimConfig, DEFAULT_BURNIN};
use crate::rng;

use super::ks::{centered_normal_cdf, ks_band, ks_statistic, KsResult};
use super::report::{ExperimentReport, MetricRow, Verdict};

#[derive(Debug, Clone)]
pub struct CltConfig {
    pub n: usize,
    pub reps: usize,
    pub burnin: usize,
    pub seed: u64,
    /// Probe functions; defaults to [`standard_probes`].
    pub probes: Option<Vec<GridFunction>>,
    /// Length of the stationary path used to estimate the increment
    /// covariance.
    pub increment_path_len: usize,
    pub neumann: NeumannConfig,
    /// Additive slack on the KS band for variance estimation error.
    pub ks_slack: f64,
}

impl CltConfig {
    pub fn new(n: usize, reps: usize, seed: u64) -> Self {
        CltConfig {
            n,
            reps,
            burnin: DEFAULT_BURNIN,
            seed,
            probes: None,
            increment_path_len: 10_000,
            neumann: NeumannConfig::default(),
            ks_slack: 0.02,
        }
    }
}

/// Report plus the per-probe KS results.
#[derive(Debug, Clone)]
pub struct CltOutcome {
    pub report: ExperimentReport,
    pub ks: Vec<KsResult>,
}

/// Constant function plus the first two Fourier modes, each normalized to
/// unit weighted norm.
pub fn standard_probes(grid: &SharedGrid) -> Vec<GridFunction> {
    use std::f64::consts::PI;
    vec![
        GridFunction::constant(grid.clone(), 1.0).normalized(NormKind::L2),
        GridFunction::from_fn(grid.clone(), |t| (2.0 * PI * t).cos()).normalized(NormKind::L2),
        GridFunction::from_fn(grid.clone(), |t| (2.0 * PI * t).sin()).normalized(NormKind::L2),
    ]
}

pub fn clt_experiment(model: &BrcaModel, cfg: &CltConfig) -> Result<CltOutcome> {
    let start = Instant::now();
    if cfg.n < 500 {
        return Err(Error::InvalidArgument("clt harness needs n >= 500".into()));
    }
    if cfg.reps < 1000 {
        return Err(Error::InvalidArgument("clt harness needs reps >= 1000".into()));
    }
    super::gate_conditions(model, 2.0, cfg.seed)?;

    let grid = model.grid().clone();
    let probes = match &cfg.probes {
        Some(p) => p.clone(),
        None => standard_probes(&grid),
    };
    if probes.is_empty() {
        return Err(Error::InvalidArgument("clt harness needs probes".into()));
    }

    let rho_bar = model.op_sampler.mean();
    let inverse = neumann_inverse(&rho_bar, &cfg.neumann)?;
    let smoothed = inverse.compose(&rho_bar)?;

    // increment covariance from one long stationary path
    let m = grid.len();
    let inc_traj = simulate_recursive(
        model,
        &SimConfig::new(cfg.increment_path_len, rng::replication_seed(cfg.seed, u64::MAX))
            .with_burnin(cfg.burnin),
    )?;
    let mut increments: Vec<DVector<f64>> = Vec::with_capacity(cfg.increment_path_len);
    for i in 1..=cfg.increment_path_len {
        let lead = inverse.apply(&inc_traj.centered(i))?;
        let lag = smoothed.apply(&inc_traj.centered(i - 1))?;
        increments.push(lead.vector() - lag.vector());
    }
    let inc_mean =
        increments.iter().fold(DVector::<f64>::zeros(m), |a, v| a + v) / increments.len() as f64;
    let cov_of = |chunk: &[DVector<f64>]| -> Result<CovOperator> {
        let mut acc = DMatrix::<f64>::zeros(m, m);
        for v in chunk {
            let d = v - &inc_mean;
            acc.ger(1.0, &d, &d, 1.0);
        }
        CovOperator::new(grid.clone(), acc / (chunk.len() as f64 - 1.0).max(1.0))
    };
    let gamma = cov_of(&increments)?;
    let segments = 10usize;
    let seg_len = increments.len() / segments;
    let mut segment_covs = Vec::with_capacity(segments);
    for s in 0..segments {
        segment_covs.push(cov_of(&increments[s * seg_len..(s + 1) * seg_len])?);
    }

    // replications of the scaled mean
    let sqrt_n = (cfg.n as f64).sqrt();
    let rep_data: Vec<(Vec<f64>, f64)> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| -> Result<(Vec<f64>, f64)> {
            let seed = rng::replication_seed(cfg.seed, r as u64);
            let traj =
                simulate_recursive(model, &SimConfig::new(cfg.n, seed).with_burnin(cfg.burnin))?;
            let mut mean_dev = DVector::<f64>::zeros(m);
            for i in 1..=cfg.n {
                mean_dev += traj.centered_vector(i);
            }
            mean_dev /= cfg.n as f64;
            let dev = GridFunction::from_vector(grid.clone(), mean_dev);
            let zs = probes
                .iter()
                .map(|g| Ok(sqrt_n * dev.inner(g)?))
                .collect::<Result<Vec<f64>>>()?;
            let n0 = smoothed.apply(&traj.centered(0))?;
            let nn = smoothed.apply(&traj.centered(cfg.n))?;
            let cob = n0.sub(&nn)?.norm(NormKind::L2) / sqrt_n;
            Ok((zs, cob))
        })
        .collect::<Result<Vec<_>>>()?;

    let band = ks_band(cfg.reps, cfg.ks_slack);
    let cob_max = rep_data.iter().map(|(_, c)| *c).fold(0.0, f64::max);

    let mut metrics = Vec::new();
    let mut ks_results = Vec::new();
    let mut verdict = Verdict::Pass;
    let mut live_probes = 0usize;
    for (k, probe) in probes.iter().enumerate() {
        let z: Vec<f64> = rep_data.iter().map(|(zs, _)| zs[k]).collect();
        let v_gamma = gamma.probe_variance(probe)?;
        let seg_vars: Vec<f64> = segment_covs
            .iter()
            .map(|c| c.probe_variance(probe))
            .collect::<Result<Vec<_>>>()?;
        let seg_mean = seg_vars.iter().sum::<f64>() / segments as f64;
        let se_gamma = (seg_vars
            .iter()
            .map(|v| (v - seg_mean).powi(2))
            .sum::<f64>()
            / (segments as f64 - 1.0)
            / segments as f64)
            .sqrt();

        let z_sq_mean = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
        let se_bart = (z
            .iter()
            .map(|v| (v * v - z_sq_mean).powi(2))
            .sum::<f64>()
            / (z.len() as f64 - 1.0)
            / z.len() as f64)
            .sqrt();
        let z_sd = z_sq_mean.sqrt();

        if v_gamma < 1e-14 {
            let max_abs = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if max_abs > 1e-8 {
                return Err(Error::DegenerateProbe(format!(
                    "probe {k}: zero target variance but samples up to {max_abs:.3e}"
                )));
            }
            metrics.push(MetricRow::new(cfg.n, format!("probe{k}_degenerate"), 0.0, 0.0));
            continue;
        }
        live_probes += 1;

        let ks = ks_statistic(&z, centered_normal_cdf(v_gamma.sqrt()), &format!(
            "N(0, {:.6e})",
            v_gamma
        ))?;
        if ks.statistic >= band {
            verdict = Verdict::Fail;
        }
        if (v_gamma - z_sq_mean).abs() >= 4.0 * (se_gamma.powi(2) + se_bart.powi(2)).sqrt() {
            verdict = Verdict::Fail;
        }
        if cob_max >= 0.1 * z_sd {
            verdict = Verdict::Fail;
        }

        metrics.push(MetricRow::new(cfg.n, format!("probe{k}_ks"), ks.statistic, band));
        metrics.push(MetricRow::new(
            cfg.n,
            format!("probe{k}_var_increment"),
            v_gamma,
            2.576 * se_gamma,
        ));
        metrics.push(MetricRow::new(
            cfg.n,
            format!("probe{k}_var_replication"),
            z_sq_mean,
            2.576 * se_bart,
        ));
        ks_results.push(ks);
    }
    metrics.push(MetricRow::new(cfg.n, "coboundary_max", cob_max, 0.0));

    if live_probes == 0 {
        verdict = Verdict::DegeneratePass;
    }

    let report = ExperimentReport {
        theorem: "clt".into(),
        model: model.describe(),
        sizes: vec![cfg.n],
        replications: cfg.reps,
        seed: cfg.seed,
        criterion: format!(
            "KS < {band:.4} per probe; increment and replication variances within 4 SE; \
             coboundary max below 10% of probe SD"
        ),
        metrics,
        verdict,
        runtime_secs: start.elapsed().as_secs_f64(),
    };
    Ok(CltOutcome {
        report,
        ks: ks_results,
    })
}
