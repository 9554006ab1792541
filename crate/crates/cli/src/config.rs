//! Merged run configuration: defaults, then the `--config` file, then
//! `--set` pairs, then dedicated flags. Later sources win.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use scm_core::kv::{parse_kv, KeyValue};
use scm_core::model::ScmConfig;
use scm_core::text::{NormalizationConfig, StopwordList, TextPipeline};
use scm_core::trainer::TrainConfig;

use crate::Usage;

/// Input files a command may read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
}

impl Paths {
    fn slot(&mut self, key: &str) -> Option<&mut Option<PathBuf>> {
        match key {
            "dataset" => Some(&mut self.dataset),
            "stopwords" => Some(&mut self.stopwords),
            "embeddings" => Some(&mut self.embeddings),
            "checkpoint" => Some(&mut self.checkpoint),
            "vocab" => Some(&mut self.vocab),
            _ => None,
        }
    }
}

impl KeyValue for Paths {
    fn set(&mut self, key: &str, value: &str) -> scm_core::Result<bool> {
        match self.slot(key) {
            Some(slot) => {
                let unset = value.is_empty() || value == "none" || (key == "stopwords" && value == "builtin");
                *slot = (!unset).then(|| PathBuf::from(value));
                Ok(true)
            }
            None => Ok(false),
        }
    }

    fn entries(&self) -> Vec<(String, String)> {
        let show = |p: &Option<PathBuf>| p.as_ref().map_or_else(|| "none".to_owned(), |p| p.display().to_string());
        vec![
            ("checkpoint".into(), show(&self.checkpoint)),
            ("dataset".into(), show(&self.dataset)),
            ("embeddings".into(), show(&self.embeddings)),
            (
                "stopwords".into(),
                self.stopwords.as_ref().map_or_else(|| "builtin".to_owned(), |p| p.display().to_string()),
            ),
            ("vocab".into(), show(&self.vocab)),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub normalization: NormalizationConfig,
    pub scm: ScmConfig,
    pub train: TrainConfig,
    pub paths: Paths,
}

impl RunConfig {
    /// Applies one assignment to every section that owns the key, so a shared
    /// key such as `seed` reaches all of them.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut known = false;
        let sections: [&mut dyn KeyValue; 4] = [&mut self.normalization, &mut self.scm, &mut self.train, &mut self.paths];
        for section in sections {
            known |= section.set(key, value).map_err(|e| Usage(e.to_string()))?;
        }
        if !known {
            return Err(Usage(format!("unknown configuration key {key:?}")).into());
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let pairs = parse_kv(&text, path).map_err(|e| Usage(e.to_string()))?;
        for (key, value) in pairs {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// `key=value` strings from `--set`.
    pub fn apply_assignments(&mut self, assignments: &[String]) -> Result<()> {
        for a in assignments {
            let (key, value) = a
                .split_once('=')
                .ok_or_else(|| Usage(format!("--set expects key=value, got {a:?}")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.scm.validate().map_err(|e| Usage(e.to_string()))?;
        self.train.validate().map_err(|e| Usage(e.to_string()))?;
        let p = &self.paths;
        for path in [&p.dataset, &p.stopwords, &p.embeddings, &p.checkpoint, &p.vocab].into_iter().flatten() {
            if !path.exists() {
                return Err(Usage(format!("{} does not exist", path.display())).into());
            }
        }
        Ok(())
    }

    /// Every effective setting, sorted by key.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.extend(self.normalization.entries());
        out.extend(self.scm.entries());
        out.extend(self.train.entries());
        out.extend(self.paths.entries());
        out
    }

    pub fn to_kv_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn pipeline(&self) -> Result<TextPipeline> {
        let stopwords = match &self.paths.stopwords {
            Some(path) => StopwordList::load(path, &self.normalization)?,
            None => StopwordList::builtin(&self.normalization),
        };
        Ok(TextPipeline::new(self.normalization.clone(), Some(stopwords)))
    }
}
