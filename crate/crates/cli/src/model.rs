//! Model construction from the configuration.
//!
//! Kernel specs: `zero`, `identity`, `scaled_identity:<c>`, `constant:<c>`,
//! `product:<c>` (c·t·s), `gaussian:<c>,<len>`.
//! Mean specs: `zero`, `constant:<v>`, `sine:<amp>`.
//! Amplitude laws: `uniform:<lo>,<hi>`.
//! Noise: `iid_gaussian` (`model.noise.sigma`), `bounded_uniform`
//! (`model.noise.bound`), `gp` (`model.noise.cov` one of `exponential:<len>`,
//! `brownian`, `squared_exp:<len>`).

use anyhow::{anyhow, bail, Result};
use brca_core::coeffgen::{AmplitudeLaw, CovKernel, NoiseSampler, OperatorSampler};
use brca_core::funspace::{Grid, GridFunction, LinearOp, SharedGrid};
use brca_core::process::BrcaModel;

use crate::config::RunConfig;

fn split_args(spec: &str) -> (&str, Vec<&str>) {
    match spec.split_once(':') {
        None => (spec.trim(), Vec::new()),
        Some((name, rest)) => (name.trim(), rest.split(',').map(str::trim).collect()),
    }
}

fn args_as_f64(key: &str, spec: &str, args: &[&str], want: usize) -> Result<Vec<f64>> {
    if args.len() != want {
        bail!("key `{key}`: `{spec}` expects {want} parameter(s)");
    }
    args.iter()
        .map(|a| {
            a.parse()
                .map_err(|_| anyhow!("key `{key}`: `{a}` is not a number in `{spec}`"))
        })
        .collect()
}

pub fn parse_kernel(key: &str, spec: &str, grid: &SharedGrid) -> Result<LinearOp> {
    let (name, args) = split_args(spec);
    match name {
        "zero" => Ok(LinearOp::zero(grid.clone())),
        "identity" => Ok(LinearOp::identity(grid.clone())),
        "scaled_identity" => {
            let a = args_as_f64(key, spec, &args, 1)?;
            Ok(LinearOp::scaled_identity(grid.clone(), a[0]))
        }
        "constant" => {
            let a = args_as_f64(key, spec, &args, 1)?;
            Ok(LinearOp::from_fn(grid.clone(), move |_, _| a[0]))
        }
        "product" => {
            let a = args_as_f64(key, spec, &args, 1)?;
            Ok(LinearOp::from_fn(grid.clone(), move |t, s| a[0] * t * s))
        }
        "gaussian" => {
            let a = args_as_f64(key, spec, &args, 2)?;
            let (c, len) = (a[0], a[1]);
            if len <= 0.0 {
                bail!("key `{key}`: gaussian kernel length must be positive");
            }
            Ok(LinearOp::from_fn(grid.clone(), move |t, s| {
                c * (-(t - s) * (t - s) / (2.0 * len * len)).exp()
            }))
        }
        other => bail!("key `{key}`: unknown kernel kind `{other}`"),
    }
}

fn parse_amplitude(key: &str, spec: &str) -> Result<AmplitudeLaw> {
    let (name, args) = split_args(spec);
    match name {
        "uniform" => {
            let a = args_as_f64(key, spec, &args, 2)?;
            AmplitudeLaw::uniform(a[0], a[1]).map_err(|e| anyhow!("key `{key}`: {e}"))
        }
        other => bail!("key `{key}`: unknown amplitude law `{other}`"),
    }
}

fn parse_mu(key: &str, spec: &str, grid: &SharedGrid) -> Result<GridFunction> {
    let (name, args) = split_args(spec);
    match name {
        "zero" => Ok(GridFunction::zero(grid.clone())),
        "constant" => {
            let a = args_as_f64(key, spec, &args, 1)?;
            Ok(GridFunction::constant(grid.clone(), a[0]))
        }
        "sine" => {
            let a = args_as_f64(key, spec, &args, 1)?;
            Ok(GridFunction::from_fn(grid.clone(), move |t| {
                a[0] * (2.0 * std::f64::consts::PI * t).sin()
            }))
        }
        other => bail!("key `{key}`: unknown mean spec `{other}`"),
    }
}

fn parse_cov_kernel(key: &str, spec: &str) -> Result<CovKernel> {
    let (name, args) = split_args(spec);
    match name {
        "exponential" => {
            let a = args_as_f64(key, spec, &args, 1)?;
            Ok(CovKernel::Exponential { length: a[0] })
        }
        "brownian" => Ok(CovKernel::BrownianMotion),
        "squared_exp" => {
            let a = args_as_f64(key, spec, &args, 1)?;
            Ok(CovKernel::SquaredExponential { length: a[0] })
        }
        other => bail!("key `{key}`: unknown covariance kernel `{other}`"),
    }
}

pub fn build_model(cfg: &RunConfig) -> Result<BrcaModel> {
    let m = cfg.get_usize("model.grid.m", 32)?;
    let grid = Grid::uniform(m).map_err(|e| anyhow!("key `model.grid.m`: {e}"))?;

    let mu_spec = cfg.get_str("model.mu", "zero");
    let mu = parse_mu("model.mu", &mu_spec, &grid)?;

    let op_kind = cfg.require_str("model.op.kind")?;
    let op_sampler = match op_kind.as_str() {
        "fixed" => {
            let spec = cfg.require_str("model.op.kernel")?;
            OperatorSampler::fixed(parse_kernel("model.op.kernel", &spec, &grid)?)
        }
        "random_kernel" => {
            let base_spec = cfg.require_str("model.op.base")?;
            let amp_spec = cfg.require_str("model.op.amp")?;
            OperatorSampler::random_kernel(
                parse_kernel("model.op.base", &base_spec, &grid)?,
                parse_amplitude("model.op.amp", &amp_spec)?,
            )
        }
        "two_regime" => {
            let a_spec = cfg.require_str("model.op.kernel_a")?;
            let b_spec = cfg.require_str("model.op.kernel_b")?;
            let prob_a = cfg.get_f64("model.op.prob_a", 0.5)?;
            OperatorSampler::two_regime(
                parse_kernel("model.op.kernel_a", &a_spec, &grid)?,
                parse_kernel("model.op.kernel_b", &b_spec, &grid)?,
                prob_a,
            )
            .map_err(|e| anyhow!("key `model.op.prob_a`: {e}"))?
        }
        "scaled_contraction" => {
            let base_spec = cfg.require_str("model.op.base")?;
            let amp_spec = cfg.require_str("model.op.amp")?;
            let cap = cfg.get_f64("model.op.cap", 0.5)?;
            OperatorSampler::scaled_contraction(
                parse_kernel("model.op.base", &base_spec, &grid)?,
                parse_amplitude("model.op.amp", &amp_spec)?,
                cap,
            )
            .map_err(|e| anyhow!("key `model.op.cap`: {e}"))?
        }
        other => bail!("key `model.op.kind`: unknown sampler kind `{other}`"),
    };

    let noise_kind = cfg.require_str("model.noise.kind")?;
    let noise_sampler = match noise_kind.as_str() {
        "iid_gaussian" => {
            let sigma = cfg.get_f64("model.noise.sigma", 1.0)?;
            NoiseSampler::iid_gaussian(grid.clone(), sigma)
                .map_err(|e| anyhow!("key `model.noise.sigma`: {e}"))?
        }
        "bounded_uniform" => {
            let bound = cfg.get_f64("model.noise.bound", 1.0)?;
            NoiseSampler::bounded_uniform(grid.clone(), bound)
                .map_err(|e| anyhow!("key `model.noise.bound`: {e}"))?
        }
        "gp" => {
            let cov_spec = cfg.require_str("model.noise.cov")?;
            let kernel = parse_cov_kernel("model.noise.cov", &cov_spec)?;
            NoiseSampler::gaussian_process(grid.clone(), kernel)
                .map_err(|e| anyhow!("key `model.noise.cov`: {e}"))?
        }
        other => bail!("key `model.noise.kind`: unknown noise kind `{other}`"),
    };

    BrcaModel::new(mu, op_sampler, noise_sampler).map_err(|e| anyhow!("model: {e}"))
}
