use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Kolmogorov-Smirnov distance between an empirical sample and a reference
/// distribution.
#[derive(Debug, Clone, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n: usize,
    pub reference: String,
}

/// Sup distance between the empirical CDF of `sample` and `cdf`.
pub fn ks_statistic(
    sample: &[f64],
    cdf: impl Fn(f64) -> f64,
    reference: &str,
) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("KS statistic of an empty sample".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let nf = n as f64;
    let mut stat = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        stat = stat
            .max((i as f64 + 1.0) / nf - f)
            .max(f - i as f64 / nf);
    }
    Ok(KsResult {
        statistic: stat,
        n,
        reference: reference.to_string(),
    })
}

/// Asymptotic 1% acceptance band `1.63 / sqrt(n)` plus an additive slack for
/// estimated reference parameters.
pub fn ks_band(n: usize, slack: f64) -> f64 {
    1.63 / (n as f64).sqrt() + slack
}

/// Mean-zero normal CDF with the given standard deviation.
pub fn centered_normal_cdf(sd: f64) -> impl Fn(f64) -> f64 {
    let dist = Normal::new(0.0, sd).expect("sd must be positive and finite");
    move |x| dist.cdf(x)
}
