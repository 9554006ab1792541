use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::{self, KeyValue};

/// Preprocessing steps. The derive order is the execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    MetadataStrip,
    DatetimeStrip,
    PunctuationDiacritics,
    Elongation,
    LetterNormalization,
    RedundantLetters,
    NonArabic,
    Stopwords,
}

impl Step {
    pub const ALL: [Step; 8] = [
        Step::MetadataStrip,
        Step::DatetimeStrip,
        Step::PunctuationDiacritics,
        Step::Elongation,
        Step::LetterNormalization,
        Step::RedundantLetters,
        Step::NonArabic,
        Step::Stopwords,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Step::MetadataStrip => "metadata-strip",
            Step::DatetimeStrip => "datetime-strip",
            Step::PunctuationDiacritics => "punctuation-diacritics",
            Step::Elongation => "elongation",
            Step::LetterNormalization => "letter-normalization",
            Step::RedundantLetters => "redundant-letters",
            Step::NonArabic => "non-arabic",
            Step::Stopwords => "stopwords",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Step {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Step::ALL
            .into_iter()
            .find(|step| step.id() == s)
            .ok_or_else(|| Error::config(format!("unknown preprocessing step {s:?}")))
    }
}

/// Which way Yeh and Alef Maqsura are folded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum YehDirection {
    /// `ى` → `ي`
    ToDotted,
    /// `ي` → `ى`
    #[default]
    ToDotless,
}

impl YehDirection {
    fn id(self) -> &'static str {
        match self {
            YehDirection::ToDotted => "to-dotted",
            YehDirection::ToDotless => "to-dotless",
        }
    }

    fn target(self) -> char {
        match self {
            YehDirection::ToDotted => '\u{064A}',
            YehDirection::ToDotless => '\u{0649}',
        }
    }
}

impl FromStr for YehDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "to-dotted" => Ok(YehDirection::ToDotted),
            "to-dotless" => Ok(YehDirection::ToDotless),
            _ => Err(Error::config(format!("yeh_direction: expected to-dotted or to-dotless, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationConfig {
    enabled_steps: BTreeSet<Step>,
    repeat_collapse_threshold: usize,
    pub yeh_direction: YehDirection,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            enabled_steps: Step::ALL.into_iter().collect(),
            repeat_collapse_threshold: 3,
            yeh_direction: YehDirection::default(),
        }
    }
}

impl NormalizationConfig {
    pub fn with_steps(steps: impl IntoIterator<Item = Step>) -> Self {
        NormalizationConfig {
            enabled_steps: steps.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn is_enabled(&self, step: Step) -> bool {
        self.enabled_steps.contains(&step)
    }

    pub fn enable(&mut self, step: Step) {
        self.enabled_steps.insert(step);
    }

    pub fn disable(&mut self, step: Step) {
        self.enabled_steps.remove(&step);
    }

    /// Enabled steps in execution order.
    pub fn steps(&self) -> impl Iterator<Item = Step> + '_ {
        self.enabled_steps.iter().copied()
    }

    pub fn repeat_collapse_threshold(&self) -> usize {
        self.repeat_collapse_threshold
    }

    pub fn set_repeat_collapse_threshold(&mut self, threshold: usize) -> Result<()> {
        if threshold < 2 {
            return Err(Error::config(format!(
                "repeat_collapse_threshold must be at least 2, got {threshold}"
            )));
        }
        self.repeat_collapse_threshold = threshold;
        Ok(())
    }
}

impl KeyValue for NormalizationConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "enabled_steps" => {
                self.enabled_steps = kv::parse_list::<Step>(key, value)?.into_iter().collect();
            }
            "repeat_collapse_threshold" => {
                self.set_repeat_collapse_threshold(kv::parse_value(key, value)?)?;
            }
            "yeh_direction" => self.yeh_direction = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(String, String)> {
        let steps: Vec<Step> = self.steps().collect();
        vec![
            ("enabled_steps".into(), kv::join_list(&steps)),
            ("repeat_collapse_threshold".into(), self.repeat_collapse_threshold.to_string()),
            ("yeh_direction".into(), self.yeh_direction.id().into()),
        ]
    }
}

const TATWEEL: char = '\u{0640}';

/// Base Arabic letters kept by the non-Arabic filter.
fn is_arabic_letter(c: char) -> bool {
    matches!(c, '\u{0621}'..='\u{063A}' | '\u{0641}'..='\u{064A}')
}

/// Letters that can appear in fully normalized output under `yeh`.
pub fn is_output_letter(c: char, yeh: YehDirection) -> bool {
    if !is_arabic_letter(c) {
        return false;
    }
    let folded_away = matches!(c, '\u{0622}' | '\u{0623}' | '\u{0624}' | '\u{0625}' | '\u{0626}' | '\u{0629}');
    let other_yeh = match yeh {
        YehDirection::ToDotless => '\u{064A}',
        YehDirection::ToDotted => '\u{0649}',
    };
    !folded_away && c != other_yeh
}

fn is_diacritic(c: char) -> bool {
    matches!(c, '\u{064B}'..='\u{0652}' | '\u{0670}')
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{060C}' | '\u{061B}' | '\u{061F}' | '\u{066A}'..='\u{066D}' | '\u{06D4}'
                | '\u{00A1}' | '\u{00AB}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}'
                | '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}'
                | '\u{3001}' | '\u{3002}' | '\u{FD3E}' | '\u{FD3F}'
        )
}

fn fold_letter(c: char, yeh: YehDirection) -> char {
    match c {
        '\u{0629}' => '\u{0647}',                         // ة → ه
        '\u{0626}' | '\u{0624}' => '\u{0621}',            // ئ ؤ → ء
        '\u{0622}' | '\u{0623}' | '\u{0625}' | '\u{0671}' => '\u{0627}', // آ أ إ ٱ → ا
        '\u{064A}' | '\u{0649}' | '\u{06CC}' => yeh.target(),
        // Keheh and the Kaf presentation forms.
        '\u{06A9}' | '\u{FED9}'..='\u{FEDC}' => '\u{0643}',
        other => other,
    }
}

fn is_url_or_handle(token: &str) -> bool {
    let lower = token.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.") || token.starts_with('@')
}

fn strip_datetime_symbols(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(at) = rest.find('@') {
        out.push_str(&rest[..at]);
        let tail = &rest[at + 1..];
        let symbol_len = ["date", "time"]
            .iter()
            .find(|sym| tail.get(..sym.len()).is_some_and(|s| s.eq_ignore_ascii_case(sym)))
            .map_or(0, |sym| sym.len());
        out.push(' ');
        rest = &tail[symbol_len..];
    }
    out.push_str(rest);
    out
}

fn collapse_runs(chars: &[char], threshold: usize) -> Vec<char> {
    let mut out = Vec::with_capacity(chars.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let mut j = i + 1;
        while j < chars.len() && chars[j] == c {
            j += 1;
        }
        let run = j - i;
        if run >= threshold && c.is_alphabetic() {
            out.push(c);
        } else {
            out.extend_from_slice(&chars[i..j]);
        }
        i = j;
    }
    out
}

/// Applies the enabled steps up to and including the non-Arabic filter, then
/// collapses whitespace to single spaces. Stopword removal needs a list and is
/// applied on tokens by [`super::TextPipeline`].
///
/// Removed punctuation, digits and foreign characters become token
/// separators; removed diacritics and tatweel join their neighbours.
pub fn normalize_text(raw: &str, config: &NormalizationConfig) -> String {
    let mut text = raw.to_owned();

    if config.is_enabled(Step::MetadataStrip) {
        text = text
            .split_whitespace()
            .filter(|tok| !is_url_or_handle(tok))
            .collect::<Vec<_>>()
            .join(" ");
    }
    if config.is_enabled(Step::DatetimeStrip) {
        text = strip_datetime_symbols(&text);
    }

    let mut chars: Vec<char> = text.chars().collect();

    if config.is_enabled(Step::PunctuationDiacritics) {
        chars = chars
            .into_iter()
            .filter(|&c| !is_diacritic(c))
            .map(|c| if is_punctuation(c) { ' ' } else { c })
            .collect();
    }
    if config.is_enabled(Step::Elongation) {
        chars.retain(|&c| c != TATWEEL);
    }
    if config.is_enabled(Step::LetterNormalization) {
        for c in chars.iter_mut() {
            *c = fold_letter(*c, config.yeh_direction);
        }
    }
    if config.is_enabled(Step::RedundantLetters) {
        chars = collapse_runs(&chars, config.repeat_collapse_threshold);
    }
    if config.is_enabled(Step::NonArabic) {
        for c in chars.iter_mut() {
            if !is_arabic_letter(*c) && !c.is_whitespace() {
                *c = ' ';
            }
        }
    }

    let joined: String = chars.into_iter().collect();
    joined.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// [`normalize_text`] over raw bytes, reporting where decoding fails.
pub fn normalize_bytes(raw: &[u8], config: &NormalizationConfig) -> Result<String> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Utf8 {
        offset: e.valid_up_to(),
    })?;
    Ok(normalize_text(text, config))
}
