//! Monte Carlo harnesses that test each limit-law prediction at desk scale.
//!
//! Every harness first runs the condition diagnostics and refuses to start on
//! a model whose contraction hypotheses are not certified, reports metrics
//! with half-widths, states its pass criterion in the report, and is
//! reproducible bitwise from `(seed, config)`.

mod clt;
mod complete;
mod expmoment;
pub mod ks;
mod rate;
pub mod report;
mod slln;
mod wlln;

pub use clt::{clt_experiment, standard_probes, CltConfig, CltOutcome};
pub use complete::{complete_convergence_experiment, CompleteConfig};
pub use expmoment::{exp_moment_experiment, ExpMomentConfig};
pub use ks::{ks_band, ks_statistic, KsResult};
pub use rate::{hilbert_rate_experiment, RateConfig};
pub use report::{ExperimentReport, MetricRow, Verdict};
pub use slln::{slln_experiment, SllnConfig};
pub use wlln::{wlln_experiment, WllnConfig};

use crate::coeffgen::{diagnose_conditions, ConditionReport};
use crate::error::{Error, Result};
use crate::process::BrcaModel;
use crate::rng::{self, TAG_AUX};

/// Draw count used by the pre-run condition gate.
const GATE_DRAWS: usize = 4000;

/// Runs the condition diagnostics and refuses (with the estimates in the
/// message) unless the moment condition is certified at the requested `p`.
pub fn gate_conditions(model: &BrcaModel, p: f64, seed: u64) -> Result<ConditionReport> {
    let mut rng = rng::stream(seed, TAG_AUX);
    let report = diagnose_conditions(&model.op_sampler, p, GATE_DRAWS, &mut rng)?;
    if !report.c3_holds {
        return Err(Error::ModelConfig(format!(
            "condition gate: E|rho|^{p} = {:.4} (+- {:.4}) is not certified below 1",
            report.norm_moment.value, report.norm_moment.half_width
        )));
    }
    model.check_mean_contraction()?;
    Ok(report)
}
