use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::normalize::{normalize_text, NormalizationConfig};

const BUILTIN: &str = include_str!("../../data/stopwords.txt");

/// Stopwords in normalized form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopwordList {
    words: BTreeSet<String>,
    source_path: Option<PathBuf>,
}

impl StopwordList {
    /// Parses the one-token-per-line format and normalizes every entry with
    /// `config`. Entries that normalize to nothing are skipped.
    pub fn from_text(text: &str, config: &NormalizationConfig) -> Result<Self> {
        Self::parse(text, config, Path::new("<memory>"))
    }

    pub fn load(path: impl AsRef<Path>, config: &NormalizationConfig) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Utf8 {
            offset: e.valid_up_to(),
        })?;
        let mut list = Self::parse(text, config, path)?;
        list.source_path = Some(path.to_owned());
        Ok(list)
    }

    /// The list shipped with the crate.
    pub fn builtin(config: &NormalizationConfig) -> Self {
        Self::from_text(BUILTIN, config).expect("builtin stopword list is well formed")
    }

    fn parse(text: &str, config: &NormalizationConfig, origin: &Path) -> Result<Self> {
        let mut words = BTreeSet::new();
        for (number, line) in text.lines().enumerate() {
            let entry = line.trim();
            if entry.is_empty() || entry.starts_with('#') {
                continue;
            }
            if entry.chars().any(char::is_whitespace) {
                return Err(Error::parse(origin, number as u64 + 1, format!("stopword {entry:?} contains whitespace")));
            }
            let normalized = normalize_text(entry, config);
            if normalized.is_empty() {
                continue;
            }
            if normalized.contains(' ') {
                return Err(Error::parse(
                    origin,
                    number as u64 + 1,
                    format!("stopword {entry:?} normalizes to several tokens"),
                ));
            }
            words.insert(normalized);
        }
        Ok(StopwordList {
            words,
            source_path: None,
        })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }
}

pub fn remove_stopwords(tokens: &[String], list: &StopwordList) -> Vec<String> {
    tokens.iter().filter(|t| !list.contains(t)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn removes_listed_tokens() {
        let list = StopwordList::from_text("وين\n", &NormalizationConfig::default()).unwrap();
        // Tokens reach the filter already normalized.
        assert_eq!(remove_stopwords(&toks(&["وىن", "المكان"]), &list), toks(&["المكان"]));
        assert!(remove_stopwords(&[], &list).is_empty());
        let other = toks(&["جميل", "المكان"]);
        assert_eq!(remove_stopwords(&other, &list), other);
    }

    #[test]
    fn entries_are_normalized_on_load() {
        let list = StopwordList::from_text("دة\nإنحنا  \n# comment\n\n", &NormalizationConfig::default()).unwrap();
        assert!(list.contains("ده"));
        assert!(list.contains("انحنا"));
        assert_eq!(list.len(), 2);
    }

    #[test]
    fn whitespace_inside_entry_rejected() {
        let err = StopwordList::from_text("ok\nبس كده\n", &NormalizationConfig::default()).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn builtin_list_is_complete_under_removal() {
        let cfg = NormalizationConfig::default();
        let list = StopwordList::builtin(&cfg);
        assert!(list.len() > 80);
        for w in list.iter() {
            assert!(!w.is_empty() && !w.contains(' '));
            assert!(remove_stopwords(&[w.to_owned()], &list).is_empty());
        }
        for table_word in ["هسع", "هدا", "كلو", "وين", "هنداك"] {
            assert!(list.contains(&normalize_text(table_word, &cfg)), "{table_word}");
        }
    }

    #[test]
    fn load_records_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sw.txt");
        std::fs::write(&path, "وين\n").unwrap();
        let list = StopwordList::load(&path, &NormalizationConfig::default()).unwrap();
        assert_eq!(list.source_path(), Some(path.as_path()));
    }
}
