//! Arabic dialect text preprocessing: normalization, tokenization and
//! stopword filtering.

mod normalize;
mod stopwords;

pub use normalize::{
    is_output_letter, normalize_bytes, normalize_text, NormalizationConfig, Step, YehDirection,
};
pub use stopwords::{remove_stopwords, StopwordList};

/// Splits normalized text into maximal non-space runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Normalization, tokenization and stopword removal bundled for reuse across
/// ingestion, vocabulary building and inference.
#[derive(Debug, Clone, Default)]
pub struct TextPipeline {
    pub config: NormalizationConfig,
    pub stopwords: Option<StopwordList>,
}

impl TextPipeline {
    pub fn new(config: NormalizationConfig, stopwords: Option<StopwordList>) -> Self {
        TextPipeline { config, stopwords }
    }

    pub fn tokens(&self, raw: &str) -> Vec<String> {
        let tokens = tokenize(&normalize_text(raw, &self.config));
        match &self.stopwords {
            Some(list) if self.config.is_enabled(Step::Stopwords) => remove_stopwords(&tokens, list),
            _ => tokens,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("المكان جميل"), vec!["المكان", "جميل"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize(" x  y "), vec!["x", "y"]);
    }

    #[test]
    fn pipeline_drops_stopwords() {
        let list = StopwordList::from_text("وين\n", &NormalizationConfig::default()).unwrap();
        let pipeline = TextPipeline::new(NormalizationConfig::default(), Some(list));
        assert_eq!(pipeline.tokens("وين المكان؟"), vec!["المكان"]);
    }

    #[test]
    fn pipeline_respects_disabled_stopword_step() {
        let list = StopwordList::from_text("وين\n", &NormalizationConfig::default()).unwrap();
        let mut config = NormalizationConfig::default();
        config.disable(Step::Stopwords);
        let pipeline = TextPipeline::new(config, Some(list));
        assert_eq!(pipeline.tokens("وين المكان"), vec!["وىن", "المكان"]);
    }
}
