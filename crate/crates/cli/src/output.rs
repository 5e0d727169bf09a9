//! Report files: JSON envelopes plus plain CSV tables.
//!
//! Reports are byte-identical for identical seed and configuration; the
//! timestamp is the only volatile field and sits alone on one line of the
//! pretty-printed JSON so it can be filtered out by diff tooling.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    effective_config: &'a BTreeMap<String, String>,
    report: &'a T,
    /// The only volatile line of the file: timestamp plus wall-clock runtime.
    volatile: String,
}

pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
        })
    }

    pub fn write_json<T: Serialize>(
        &self,
        name: &str,
        command: &str,
        seed: u64,
        config: &BTreeMap<String, String>,
        report: &T,
        runtime_secs: Option<f64>,
    ) -> Result<PathBuf> {
        let volatile = match runtime_secs {
            Some(rt) => format!(
                "timestamp={} runtime_secs={rt:.3}",
                chrono::Utc::now().to_rfc3339()
            ),
            None => format!("timestamp={}", chrono::Utc::now().to_rfc3339()),
        };
        let envelope = Envelope {
            command,
            seed,
            effective_config: config,
            report,
            volatile,
        };
        let text = serde_json::to_string_pretty(&envelope)?;
        let path = self.dir.join(name);
        std::fs::write(&path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

/// Long-format trajectory table: `replication,time_index,node_index,value`.
pub fn trajectory_csv(trajs: &[brca_core::process::Trajectory]) -> String {
    let mut out = String::from("replication,time_index,node_index,value\n");
    for (rep, traj) in trajs.iter().enumerate() {
        for i in 0..=traj.len() {
            for (k, v) in traj.state(i).values().iter().enumerate() {
                out.push_str(&format!("{rep},{i},{k},{v}\n"));
            }
        }
    }
    out
}

/// Plain matrix table, one row per grid node.
pub fn matrix_csv(cov: &brca_core::estimate::CovOperator) -> String {
    let matrix = cov.matrix();
    let mut out = String::new();
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols())
            .map(|j| format!("{}", matrix[(i, j)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
