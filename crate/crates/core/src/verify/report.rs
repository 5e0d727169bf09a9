use serde::Serialize;

/// One measured metric at one sample size.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub n: usize,
    pub metric: String,
    pub value: f64,
    pub half_width: f64,
}

impl MetricRow {
    pub fn new(n: usize, metric: impl Into<String>, value: f64, half_width: f64) -> Self {
        MetricRow {
            n,
            metric: metric.into(),
            value,
            half_width,
        }
    }
}

/// Harness outcome. `DegeneratePass` marks vacuous successes (for instance a
/// noiseless model where both sides of a limit are identically zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    InsufficientSizes,
    DegeneratePass,
}

/// What one experiment measured and concluded. The criterion that produced
/// the verdict is spelled out in the report itself.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub theorem: String,
    pub model: String,
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub criterion: String,
    pub metrics: Vec<MetricRow>,
    pub verdict: Verdict,
    /// Wall-clock seconds; reported on the console and on the volatile header
    /// line of report files, never in the reproducible JSON body.
    #[serde(skip_serializing)]
    pub runtime_secs: f64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        matches!(self.verdict, Verdict::Pass | Verdict::DegeneratePass)
    }

    /// Metric table, one row per metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theorem,n,metric,value,half_width,verdict\n");
        let verdict = match self.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::InsufficientSizes => "insufficient_sizes",
            Verdict::DegeneratePass => "degenerate_pass",
        };
        for row in &self.metrics {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.theorem, row.n, row.metric, row.value, row.half_width, verdict
            ));
        }
        out
    }

    /// One-line console summary per metric.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .metrics
            .iter()
            .map(|r| {
                format!(
                    "{} n={} {} = {:.6e} (+- {:.2e})",
                    self.theorem, r.n, r.metric, r.value, r.half_width
                )
            })
            .collect();
        lines.push(format!(
            "{} verdict: {:?} [{}] in {:.2}s",
            self.theorem, self.verdict, self.criterion, self.runtime_secs
        ));
        lines
    }
}
