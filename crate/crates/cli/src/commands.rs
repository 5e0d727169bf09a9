//! Subcommand implementations. Each returns the process exit code: 0 for
//! pass-or-completed, 2 for "ran correctly but the check failed"; operational
//! errors bubble up as `Err` and exit 1.

use std::time::Instant;

use anyhow::{anyhow, Result};
use serde::Serialize;

use brca_core::coeffgen::diagnose_conditions;
use brca_core::estimate::{
    bartlett_mean_cov, default_lag_budget, empirical_cross_cov, longrun_cov, CovOperator,
};
use brca_core::funspace::{GridFunction, NormKind};
use brca_core::martingale::{
    decompose, martingale_mean_test, telescoping_residual, NeumannConfig,
};
use brca_core::process::{
    default_truncation, finite_decomposition_residual, simulate_recursive, simulate_series,
    Engine, SimConfig, Trajectory, DEFAULT_BURNIN,
};
use brca_core::rng::{self, TAG_AUX, TAG_NOISE, TAG_OPERATOR};
use brca_core::verify::{
    clt_experiment, complete_convergence_experiment, exp_moment_experiment,
    hilbert_rate_experiment, slln_experiment, wlln_experiment, CltConfig, CompleteConfig,
    ExpMomentConfig, ExperimentReport, KsResult, RateConfig, SllnConfig, WllnConfig,
};

use crate::config::RunConfig;
use crate::model::build_model;
use crate::output::{matrix_csv, trajectory_csv, OutputDir};

fn seed_of(cfg: &RunConfig) -> Result<u64> {
    cfg.get_u64("seed", 42)
}

fn want_csv(cfg: &RunConfig) -> bool {
    cfg.get_str("output.formats", "json,csv").contains("csv")
}

pub fn run_conditions(cfg: &RunConfig, out: &OutputDir) -> Result<i32> {
    let model = build_model(cfg)?;
    let seed = seed_of(cfg)?;
    let p = cfg.get_f64("command.p", 2.0)?;
    let n_mc = cfg.get_usize("command.n_mc", 4000)?;
    cfg.ensure_all_consumed()?;

    let mut stream = rng::stream(seed, TAG_AUX);
    let report = diagnose_conditions(&model.op_sampler, p, n_mc, &mut stream)?;
    println!(
        "conditions E|rho|^{p} = {:.6} (+- {:.2e})  [{}]",
        report.norm_moment.value,
        report.norm_moment.half_width,
        if report.c3_holds { "pass" } else { "fail" }
    );
    println!(
        "conditions E ln|rho| = {:.6} (+- {:.2e})  [{}]",
        report.log_norm.value,
        report.log_norm.half_width,
        if report.log_criterion_holds { "pass" } else { "fail" }
    );
    println!(
        "conditions sup|rho| = {:.6} ({})  [{}]",
        report.sup_norm,
        if report.sup_exact { "sure bound" } else { "max over draws" },
        if report.delta_lt_one { "certified < 1" } else { "not certified" }
    );

    out.write_json("conditions_report.json", "conditions", seed, &cfg.effective(), &report, None)?;
    if want_csv(cfg) {
        let csv = format!(
            "metric,value,half_width\nnorm_moment_p{p},{},{}\nlog_norm,{},{}\nsup_norm,{},0\n",
            report.norm_moment.value,
            report.norm_moment.half_width,
            report.log_norm.value,
            report.log_norm.half_width,
            report.sup_norm
        );
        out.write_text("conditions.csv", &csv)?;
    }
    Ok(if report.c3_holds { 0 } else { 2 })
}

#[derive(Serialize)]
struct SimulateReport {
    engine: String,
    n: usize,
    reps: usize,
    truncation: Option<usize>,
    moment_agreement: Option<MomentAgreement>,
}

#[derive(Serialize)]
struct MomentAgreement {
    probe_mean_recursive: f64,
    probe_mean_series: f64,
    mean_gap_over_se: f64,
    probe_second_recursive: f64,
    probe_second_series: f64,
    second_gap_over_se: f64,
    pass: bool,
}

pub fn run_simulate(cfg: &RunConfig, out: &OutputDir) -> Result<i32> {
    let model = build_model(cfg)?;
    let seed = seed_of(cfg)?;
    let n = cfg.get_usize("command.n", 200)?;
    let reps = cfg.get_usize("command.reps", 1)?;
    let burnin = cfg.get_usize("command.burnin", DEFAULT_BURNIN)?;
    let engine = cfg.get_str("command.engine", "recursive");
    cfg.ensure_all_consumed()?;

    let engines: Vec<Engine> = match engine.as_str() {
        "recursive" => vec![Engine::Recursive],
        "series" => vec![Engine::Series],
        "both" => vec![Engine::Recursive, Engine::Series],
        other => return Err(anyhow!("key `command.engine`: unknown engine `{other}`")),
    };
    let needs_series = engines.contains(&Engine::Series);
    let truncation = if needs_series {
        Some(default_truncation(&model, 2.0, 1e-6)?)
    } else {
        None
    };

    let mut by_engine: Vec<(Engine, Vec<Trajectory>)> = Vec::new();
    for &eng in &engines {
        let mut trajs = Vec::with_capacity(reps);
        for r in 0..reps {
            let mut sim = SimConfig::new(n, rng::replication_seed(seed, r as u64))
                .with_burnin(burnin);
            if let Some(j) = truncation {
                sim = sim.with_truncation(j);
            }
            trajs.push(match eng {
                Engine::Recursive => simulate_recursive(&model, &sim)?,
                Engine::Series => simulate_series(&model, &sim)?,
            });
        }
        out.write_text(&format!("trajectory_{eng}.csv"), &trajectory_csv(&trajs))?;
        println!("simulate {eng}: {reps} path(s) of length {n} written");
        by_engine.push((eng, trajs));
    }

    let moment_agreement = if engines.len() == 2 && reps >= 2 {
        let probe = GridFunction::constant(model.grid().clone(), 1.0);
        let stats = |trajs: &[Trajectory]| -> Result<(f64, f64, f64, f64)> {
            let vals: Vec<f64> = trajs
                .iter()
                .map(|t| t.state(t.len()).inner(&probe).map_err(anyhow::Error::from))
                .collect::<Result<Vec<_>>>()?;
            let nn = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / nn;
            let second = vals.iter().map(|v| v * v).sum::<f64>() / nn;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nn - 1.0);
            let var2 = vals.iter().map(|v| (v * v - second).powi(2)).sum::<f64>() / (nn - 1.0);
            Ok((mean, (var / nn).sqrt(), second, (var2 / nn).sqrt()))
        };
        let (m_rec, se_rec, s_rec, se2_rec) = stats(&by_engine[0].1)?;
        let (m_ser, se_ser, s_ser, se2_ser) = stats(&by_engine[1].1)?;
        let mean_gap = (m_rec - m_ser).abs() / (se_rec.powi(2) + se_ser.powi(2)).sqrt().max(1e-300);
        let second_gap =
            (s_rec - s_ser).abs() / (se2_rec.powi(2) + se2_ser.powi(2)).sqrt().max(1e-300);
        let pass = mean_gap < 4.0 && second_gap < 4.0;
        println!(
            "simulate moment agreement: mean gap {mean_gap:.2} SE, second-moment gap {second_gap:.2} SE [{}]",
            if pass { "pass" } else { "fail" }
        );
        Some(MomentAgreement {
            probe_mean_recursive: m_rec,
            probe_mean_series: m_ser,
            mean_gap_over_se: mean_gap,
            probe_second_recursive: s_rec,
            probe_second_series: s_ser,
            second_gap_over_se: second_gap,
            pass,
        })
    } else {
        None
    };

    let pass = moment_agreement.as_ref().map_or(true, |m| m.pass);
    let report = SimulateReport {
        engine,
        n,
        reps,
        truncation,
        moment_agreement,
    };
    out.write_json("simulate_report.json", "simulate", seed, &cfg.effective(), &report, None)?;
    Ok(if pass { 0 } else { 2 })
}

#[derive(Serialize)]
struct DecomposeReport {
    n: usize,
    telescoping_residual: f64,
    finite_decomposition_residual: f64,
    martingale_mean_norm: f64,
    martingale_se: f64,
    n_resample: usize,
    pass: bool,
}

pub fn run_decompose(cfg: &RunConfig, out: &OutputDir) -> Result<i32> {
    let model = build_model(cfg)?;
    let seed = seed_of(cfg)?;
    let n = cfg.get_usize("command.n", 1000)?;
    let burnin = cfg.get_usize("command.burnin", DEFAULT_BURNIN)?;
    let n_resample = cfg.get_usize("command.n_resample", 10_000)?;
    cfg.ensure_all_consumed()?;

    let traj = simulate_recursive(
        &model,
        &SimConfig::new(n, seed).with_burnin(burnin).recording(),
    )?;
    let rho_bar = model.op_sampler.mean();
    let cob = decompose(&traj, &rho_bar, &NeumannConfig::default())?;
    let tel = telescoping_residual(&traj, &cob);
    let fd = finite_decomposition_residual(&traj)?;

    let x_prev = traj.state(n).clone();
    let aux = rng::replication_seed(seed, u64::MAX);
    let mut op_rng = rng::stream(aux, TAG_OPERATOR);
    let mut noise_rng = rng::stream(aux, TAG_NOISE);
    let mart = martingale_mean_test(
        &model,
        &x_prev,
        n_resample,
        &NeumannConfig::default(),
        &mut op_rng,
        &mut noise_rng,
    )?;

    let pass = tel < 1e-9 && fd < 1e-9 && mart.mean_norm <= 4.0 * mart.se + 1e-12;
    println!("decompose telescoping residual = {tel:.3e}");
    println!("decompose finite-decomposition residual = {fd:.3e}");
    println!(
        "decompose martingale mean (resampled {n_resample}x) = {:.3e} vs SE {:.3e} [{}]",
        mart.mean_norm,
        mart.se,
        if pass { "pass" } else { "fail" }
    );
    let report = DecomposeReport {
        n,
        telescoping_residual: tel,
        finite_decomposition_residual: fd,
        martingale_mean_norm: mart.mean_norm,
        martingale_se: mart.se,
        n_resample,
        pass,
    };
    out.write_json("decompose_report.json", "decompose", seed, &cfg.effective(), &report, None)?;
    Ok(if pass { 0 } else { 2 })
}

#[derive(Serialize)]
struct CovSummary {
    nuclear_norm: f64,
    operator_norm: f64,
    top_eigenvalues: Vec<f64>,
}

fn summarize(cov: &CovOperator) -> CovSummary {
    CovSummary {
        nuclear_norm: cov.nuclear_norm(),
        operator_norm: cov.operator_norm(),
        top_eigenvalues: cov.eigenvalues().into_iter().take(5).collect(),
    }
}

#[derive(Serialize)]
struct EstimateReport {
    n: usize,
    lags: usize,
    lag0: CovSummary,
    longrun: CovSummary,
    mean_scaled: CovSummary,
}

pub fn run_estimate(cfg: &RunConfig, out: &OutputDir) -> Result<i32> {
    let model = build_model(cfg)?;
    let seed = seed_of(cfg)?;
    let n = cfg.get_usize("command.n", 2000)?;
    let burnin = cfg.get_usize("command.burnin", DEFAULT_BURNIN)?;
    let traj = simulate_recursive(&model, &SimConfig::new(n, seed).with_burnin(burnin))?;

    let x2 = (1..=n)
        .map(|i| traj.centered(i).norm(NormKind::L2).powi(2))
        .sum::<f64>()
        / n as f64;
    let auto_lags = default_lag_budget(&model, x2, 1e-4).min(n / 4);
    let lags = match cfg.get_usize("command.lags", 0)? {
        0 => auto_lags,
        explicit => explicit,
    };
    cfg.ensure_all_consumed()?;

    let lag0 = empirical_cross_cov(&traj, 0, traj.mu())?;
    let lr = longrun_cov(&traj, lags, traj.mu())?;
    let bart = bartlett_mean_cov(&traj, traj.mu())?;

    if want_csv(cfg) {
        out.write_text("cov_lag0.csv", &matrix_csv(&lag0))?;
        out.write_text("cov_longrun.csv", &matrix_csv(&lr))?;
        out.write_text("cov_mean_scaled.csv", &matrix_csv(&bart))?;
    }
    let report = EstimateReport {
        n,
        lags,
        lag0: summarize(&lag0),
        longrun: summarize(&lr),
        mean_scaled: summarize(&bart),
    };
    println!(
        "estimate lag0 |C|_N = {:.6}, longrun({lags}) |C|_N = {:.6}",
        report.lag0.nuclear_norm, report.longrun.nuclear_norm
    );
    out.write_json("estimate_report.json", "estimate", seed, &cfg.effective(), &report, None)?;
    Ok(0)
}

#[derive(Serialize)]
struct CltJson {
    #[serde(flatten)]
    report: ExperimentReport,
    ks: Vec<KsResult>,
}

pub fn run_verify(theorem: &str, cfg: &RunConfig, out: &OutputDir) -> Result<i32> {
    let model = build_model(cfg)?;
    let seed = seed_of(cfg)?;
    let burnin = cfg.get_usize("command.burnin", DEFAULT_BURNIN)?;

    let started = Instant::now();
    let (report, ks) = match theorem {
        "wlln" => {
            let mut hc = WllnConfig::new(
                cfg.get_usize_list("command.n_list", &[400, 1600, 3200])?,
                cfg.get_usize("command.reps", 200)?,
                seed,
            );
            hc.burnin = burnin;
            hc.lag_budget = cfg.get_usize("command.lags", 20)?;
            hc.ref_path_len = cfg.get_usize("command.ref_path_len", 100_000)?;
            cfg.ensure_all_consumed()?;
            (wlln_experiment(&model, &hc)?, None)
        }
        "rate" => {
            let mut hc = RateConfig::new(
                cfg.get_usize_list("command.n_list", &[500, 2000])?,
                cfg.get_usize("command.reps", 1000)?,
                seed,
            );
            hc.burnin = burnin;
            hc.lag_budget = cfg.get_usize("command.lags", 20)?;
            hc.ref_path_len = cfg.get_usize("command.ref_path_len", 100_000)?;
            cfg.ensure_all_consumed()?;
            (hilbert_rate_experiment(&model, &hc)?, None)
        }
        "slln" => {
            let mut hc = SllnConfig::new(
                cfg.get_usize_list("command.n_list", &[1000, 10_000, 100_000])?,
                seed,
            );
            hc.burnin = burnin;
            hc.lag_budget = cfg.get_usize("command.lags", 20)?;
            hc.ref_path_len = cfg.get_usize("command.ref_path_len", 50_000)?;
            cfg.ensure_all_consumed()?;
            (slln_experiment(&model, &hc)?, None)
        }
        "complete" => {
            let mut hc = CompleteConfig::new(
                cfg.get_f64("command.alpha", 1.0)?,
                cfg.get_f64("command.p", 1.5)?,
                cfg.get_f64("command.eps", 1.0)?,
                cfg.get_usize("command.n_max", 512)?,
                cfg.get_usize("command.reps", 2000)?,
                seed,
            );
            hc.burnin = burnin;
            cfg.ensure_all_consumed()?;
            (complete_convergence_experiment(&model, &hc)?, None)
        }
        "expmoment" => {
            let mut hc = ExpMomentConfig::new(
                cfg.get_f64_list("command.gammas", &[0.5, 1.0])?,
                cfg.get_usize("command.reps", 2000)?,
                seed,
            );
            hc.burnin = burnin;
            cfg.ensure_all_consumed()?;
            (exp_moment_experiment(&model, &hc)?, None)
        }
        "clt" => {
            let mut hc = CltConfig::new(
                cfg.get_usize("command.n", 1000)?,
                cfg.get_usize("command.reps", 2000)?,
                seed,
            );
            hc.burnin = burnin;
            hc.increment_path_len = cfg.get_usize("command.increment_path_len", 10_000)?;
            cfg.ensure_all_consumed()?;
            let outcome = clt_experiment(&model, &hc)?;
            (outcome.report, Some(outcome.ks))
        }
        other => return Err(anyhow!("unknown theorem `{other}`")),
    };

    for line in report.summary_lines() {
        println!("{line}");
    }
    let passed = report.passed();
    let runtime = started.elapsed().as_secs_f64();
    let name = format!("verify_{theorem}_report.json");
    match ks {
        Some(ks) => {
            let payload = CltJson { report, ks };
            out.write_json(&name, &format!("verify {theorem}"), seed, &cfg.effective(), &payload, Some(runtime))?;
            if want_csv(cfg) {
                out.write_text(&format!("verify_{theorem}_metrics.csv"), &payload.report.to_csv())?;
            }
        }
        None => {
            out.write_json(&name, &format!("verify {theorem}"), seed, &cfg.effective(), &report, Some(runtime))?;
            if want_csv(cfg) {
                out.write_text(&format!("verify_{theorem}_metrics.csv"), &report.to_csv())?;
            }
        }
    }
    Ok(if passed { 0 } else { 2 })
}
