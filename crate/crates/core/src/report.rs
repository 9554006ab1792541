//! Run reports: a deterministic JSON record of what a command did.
//!
//! Wall-clock timings are kept out of the report so that two runs with the
//! same inputs and seed produce byte-identical files; they go to a sidecar
//! written by [`emit_timing`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::trainer::{mean_std, Metrics};

pub const TOOL: &str = "scm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: impl AsRef<Path>) -> Result<InputFile> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(InputFile {
            path: path.display().to_string(),
            sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub folds: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_loss: f64,
}

/// Field order here is the key order in the JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Every effective setting, defaults included.
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, InputFile>,
    pub folds: Vec<Metrics>,
    pub summary: Option<Summary>,
    /// Command-specific extras (preprocessing counts, histories, coverage).
    pub details: serde_json::Value,
}

impl RunReport {
    pub fn new(command: impl Into<String>, seed: u64) -> Self {
        RunReport {
            tool: TOOL.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.into(),
            seed,
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            folds: Vec::new(),
            summary: None,
            details: serde_json::Value::Object(Default::default()),
        }
    }

    pub fn echo_config(&mut self, entries: Vec<(String, String)>) {
        self.config.extend(entries);
    }

    pub fn add_detail(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        let value = serde_json::to_value(value)?;
        if let serde_json::Value::Object(map) = &mut self.details {
            map.insert(key.to_owned(), value);
        }
        Ok(())
    }

    /// Recomputes `summary` from `folds`.
    pub fn summarize(&mut self) {
        if self.folds.is_empty() {
            self.summary = None;
            return;
        }
        let acc: Vec<f64> = self.folds.iter().map(|m| m.accuracy).collect();
        let loss: Vec<f64> = self.folds.iter().map(|m| m.loss).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&acc);
        self.summary = Some(Summary {
            folds: self.folds.len(),
            mean_accuracy,
            std_accuracy,
            mean_loss: mean_std(&loss).0,
        });
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("{} is not a file path", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Writes the report. With `require_metrics`, a report without folds is an
/// error and nothing is written.
pub fn emit_report(report: &RunReport, path: impl AsRef<Path>, require_metrics: bool) -> Result<()> {
    if require_metrics && report.folds.is_empty() {
        return Err(Error::data("report has no fold results"));
    }
    write_atomic(path.as_ref(), &report.to_json()?)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<RunReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub command: String,
    pub wall_clock_seconds: f64,
}

pub fn emit_timing(timing: &Timing, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &(serde_json::to_string_pretty(timing)? + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(acc_hits: usize) -> Metrics {
        let truth = [0, 0, 1, 1, 1];
        let mut pred = [1, 1, 0, 0, 0];
        pred[..acc_hits].copy_from_slice(&truth[..acc_hits]);
        Metrics::from_predictions(&truth, &pred, 2, 0.5).unwrap()
    }

    #[test]
    fn empty_folds_leave_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let report = RunReport::new("crossval", 1);
        assert!(emit_report(&report, &path, true).is_err());
        assert!(!path.exists());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn single_fold_summary() {
        let mut report = RunReport::new("evaluate", 1);
        report.folds.push(metrics(4));
        report.summarize();
        let s = report.summary.unwrap();
        assert_eq!(s.mean_accuracy, 0.8);
        assert_eq!(s.std_accuracy, 0.0);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let mut report = RunReport::new("crossval", 9);
        report.echo_config(vec![("pooling".into(), "mma".into()), ("epochs".into(), "3".into())]);
        report.folds = vec![metrics(4), metrics(5)];
        report.summarize();
        report.add_detail("note", "x").unwrap();
        emit_report(&report, &path, true).unwrap();
        let back = read_report(&path).unwrap();
        assert_eq!(back, report);
        assert!((back.summary.unwrap().mean_accuracy - 0.9).abs() < 1e-12);
        let text = std::fs::read_to_string(&path).unwrap();
        let tool = text.find("\"tool\"").unwrap();
        let summary = text.find("\"summary\"").unwrap();
        assert!(tool < summary);
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let report = RunReport::new("train", 1);
        assert!(emit_report(&report, "/nonexistent-dir/x/report.json", false).is_err());
    }
}
