//! Flat key-value run configuration.
//!
//! Grammar: one `key = value` pair per line, `#` starts a comment, blank
//! lines are ignored, keys are dotted lowercase paths
//! (`model.grid.m = 32`). Later assignments win, command-line overrides win
//! over the file, and every key must be recognized by the command that runs.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Default)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
    consumed: RefCell<BTreeSet<String>>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config file {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{raw}`", lineno + 1))?;
            let key = key.trim();
            if key.is_empty() {
                bail!("line {}: empty key", lineno + 1);
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(RunConfig {
            entries,
            consumed: RefCell::new(BTreeSet::new()),
        })
    }

    /// Applies a `key=value` override (command line wins over the file).
    pub fn set_override(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{pair}` is not of the form key=value"))?;
        self.entries
            .insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), value);
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let v = self.entries.get(key).map(|s| s.as_str());
        if v.is_some() {
            self.consumed.borrow_mut().insert(key.to_string());
        }
        v
    }

    pub fn get_str(&self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or(default).to_string()
    }

    pub fn require_str(&self, key: &str) -> Result<String> {
        self.raw(key)
            .map(str::to_string)
            .ok_or_else(|| anyhow!("missing required key `{key}`"))
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| anyhow!("key `{key}`: expected a number, got `{v}`")),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| anyhow!("key `{key}`: expected a nonnegative integer, got `{v}`")),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| anyhow!("key `{key}`: expected a 64-bit integer, got `{v}`")),
        }
    }

    pub fn get_usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| anyhow!("key `{key}`: expected integers, got `{s}`"))
                })
                .collect(),
        }
    }

    pub fn get_f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| anyhow!("key `{key}`: expected numbers, got `{s}`"))
                })
                .collect(),
        }
    }

    /// Fails if the config carries keys nothing consumed (typos, wrong
    /// section, parameters of another command).
    pub fn ensure_all_consumed(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        let stray: Vec<&String> = self
            .entries
            .keys()
            .filter(|k| !consumed.contains(*k))
            .collect();
        if stray.is_empty() {
            Ok(())
        } else {
            bail!(
                "unknown key{} in configuration: {}",
                if stray.len() > 1 { "s" } else { "" },
                stray
                    .iter()
                    .map(|s| format!("`{s}`"))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        }
    }

    /// The effective configuration, echoed into every report.
    pub fn effective(&self) -> BTreeMap<String, String> {
        self.entries.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_pairs() {
        let cfg = RunConfig::parse(
            "# header\n\nmodel.grid.m = 32  # inline\nseed=7\ncommand.n_list = 1, 2,3\n",
        )
        .unwrap();
        assert_eq!(cfg.get_usize("model.grid.m", 0).unwrap(), 32);
        assert_eq!(cfg.get_u64("seed", 0).unwrap(), 7);
        assert_eq!(
            cfg.get_usize_list("command.n_list", &[]).unwrap(),
            vec![1, 2, 3]
        );
        cfg.ensure_all_consumed().unwrap();
    }

    #[test]
    fn later_assignments_and_overrides_win() {
        let mut cfg = RunConfig::parse("seed = 1\nseed = 2\n").unwrap();
        assert_eq!(cfg.get_u64("seed", 0).unwrap(), 2);
        cfg.set_override("seed=3").unwrap();
        assert_eq!(cfg.get_u64("seed", 0).unwrap(), 3);
    }

    #[test]
    fn bad_values_name_the_key() {
        let cfg = RunConfig::parse("model.grid.m = big\n").unwrap();
        let err = cfg.get_usize("model.grid.m", 0).unwrap_err().to_string();
        assert!(err.contains("model.grid.m"), "{err}");
    }

    #[test]
    fn stray_keys_are_rejected() {
        let cfg = RunConfig::parse("model.grid.n = 3\n").unwrap();
        let err = cfg.ensure_all_consumed().unwrap_err().to_string();
        assert!(err.contains("model.grid.n"), "{err}");
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(RunConfig::parse("just words\n").is_err());
        assert!(RunConfig::parse(" = 3\n").is_err());
    }
}
