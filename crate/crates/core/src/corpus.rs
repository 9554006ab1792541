//! Labelled datasets: CSV ingestion, judge-vote aggregation, seeded splits and
//! k-fold partitions.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Sentiment class. The discriminant is the class index used by the model
/// and in every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive = 0,
    Negative = 1,
    Neutral = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Positive, Label::Negative, Label::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn token(self) -> &'static str {
        match self {
            Label::Positive => "pos",
            Label::Negative => "neg",
            Label::Neutral => "neu",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Label::Positive => "Positive",
            Label::Negative => "Negative",
            Label::Neutral => "Neutral",
        };
        f.write_str(name)
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "pos" => Ok(Label::Positive),
            "neg" => Ok(Label::Negative),
            "neu" => Ok(Label::Neutral),
            other => Err(format!("unknown label {other:?} (expected pos, neg or neu)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Schema {
    TwoClass,
    ThreeClass,
}

impl Schema {
    pub fn from_num_classes(n: usize) -> Result<Schema> {
        match n {
            2 => Ok(Schema::TwoClass),
            3 => Ok(Schema::ThreeClass),
            _ => Err(Error::config(format!("number of classes must be 2 or 3, got {n}"))),
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Schema::TwoClass => 2,
            Schema::ThreeClass => 3,
        }
    }

    pub fn admits(self, label: Label) -> bool {
        label.index() < self.num_classes()
    }

    pub fn labels(self) -> &'static [Label] {
        &Label::ALL[..self.num_classes()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub text: String,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: Label) -> Self {
        LabeledExample {
            text: text.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub schema: Schema,
    examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, schema: Schema, examples: Vec<LabeledExample>) -> Result<Self> {
        if let Some(bad) = examples.iter().find(|e| !schema.admits(e.label)) {
            return Err(Error::data(format!("{} label under {:?} schema", bad.label, schema)));
        }
        Ok(Dataset {
            name: name.into(),
            schema,
            examples,
        })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Per-class counts indexed by [`Label::index`]; length = number of classes.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.schema.num_classes()];
        for e in &self.examples {
            counts[e.label.index()] += 1;
        }
        counts
    }

    /// Subset by example index, preserving the given order.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Dataset {
        Dataset {
            name: name.into(),
            schema: self.schema,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.kind() {
        csv::ErrorKind::Utf8 { err: utf8, .. } => Error::parse(path, line, format!("invalid UTF-8 in field {}", utf8.field())),
        _ => Error::parse(path, line, err.to_string()),
    }
}

fn check_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::parse(path, 1, format!("expected header {:?}, found {:?}", expected.join(","), got.join(","))));
    }
    Ok(())
}

/// Reads a `text,label` CSV. Every row is kept; unknown labels and labels
/// outside `schema` are rejected with their line number.
pub fn load_dataset(path: impl AsRef<Path>, schema: Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    check_header(path, &mut reader, &["text", "label"])?;
    let mut examples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let label: Label = record[1].parse().map_err(|m: String| Error::parse(path, line, m))?;
        if !schema.admits(label) {
            return Err(Error::parse(path, line, format!("{label} label not allowed under {schema:?} schema")));
        }
        let text = &record[0];
        if text.trim().is_empty() {
            return Err(Error::parse(path, line, "empty text"));
        }
        examples.push(LabeledExample::new(text, label));
    }
    let name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    Dataset::new(name, schema, examples)
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer.write_record(["text", "label"]).map_err(|e| csv_error(path, e))?;
    for e in ds.examples() {
        writer.write_record([e.text.as_str(), e.label.token()]).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// One judge's verdict on a post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Judgement {
    Sentiment(Label),
    NotSudanese,
}

impl FromStr for Judgement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "notsud" => Ok(Judgement::NotSudanese),
            other => other
                .parse()
                .map(Judgement::Sentiment)
                .map_err(|_| format!("unknown judgement {other:?} (expected pos, neg, neu or notsud)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub text: String,
    pub judge_labels: Vec<Judgement>,
}

/// Reads a `text,judge1,judge2,judge3` CSV.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    check_header(path, &mut reader, &["text", "judge1", "judge2", "judge3"])?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let judge_labels = (1..4)
            .map(|i| record[i].parse::<Judgement>().map_err(|m| Error::parse(path, line, m)))
            .collect::<Result<Vec<_>>>()?;
        out.push(AnnotationRecord {
            text: record[0].to_owned(),
            judge_labels,
        });
    }
    Ok(out)
}

/// Majority label of one record, or `None` when the record is discarded.
pub fn majority_label(record: &AnnotationRecord, schema: Schema) -> Result<Option<Label>> {
    if record.judge_labels.len() != 3 {
        return Err(Error::data(format!(
            "annotation record has {} judgements, expected 3",
            record.judge_labels.len()
        )));
    }
    let votes = |j: Judgement| record.judge_labels.iter().filter(|&&x| x == j).count();
    if votes(Judgement::NotSudanese) >= 2 {
        return Ok(None);
    }
    let winner = Label::ALL.into_iter().find(|&l| votes(Judgement::Sentiment(l)) >= 2);
    Ok(winner.filter(|&l| schema.admits(l)))
}

/// Keeps posts at least two of the three judges agree on.
pub fn aggregate_annotations(records: &[AnnotationRecord], schema: Schema, name: &str) -> Result<Dataset> {
    let mut examples = Vec::new();
    for record in records {
        if let Some(label) = majority_label(record, schema)? {
            examples.push(LabeledExample::new(record.text.clone(), label));
        }
    }
    Dataset::new(name, schema, examples)
}

/// Sizes of a floor-based split; rounding remainder goes to train.
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (train, val, test) = ratios;
    if !(train > 0.0 && val > 0.0 && test > 0.0) {
        return Err(Error::config(format!("split ratios must be positive, got {ratios:?}")));
    }
    if (train + val + test - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split ratios must sum to 1, got {}", train + val + test)));
    }
    // The slack absorbs representation error such as 0.1 * 30 = 3.0000000000000004.
    let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let n_val = floor(val);
    let n_test = floor(test);
    Ok((n - n_val - n_test, n_val, n_test))
}

/// Seeded shuffle followed by a `(train, val, test)` cut.
pub fn split_dataset(ds: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::data("cannot split an empty dataset"));
    }
    let (n_train, n_val, _) = split_sizes(ds.len(), ratios)?;
    let order = Rng::new(seed).permutation(ds.len());
    let (train, rest) = order.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((
        ds.subset(format!("{}-train", ds.name), train),
        ds.subset(format!("{}-val", ds.name), val),
        ds.subset(format!("{}-test", ds.name), test),
    ))
}

/// Held-out index sets of a seeded k-fold partition. Fold sizes differ by at
/// most one; the first `n % k` folds get the extra element.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::config(format!("k-fold needs 2 <= k <= N, got k={k}, N={n}")));
    }
    let order = Rng::new(seed).permutation(n);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// `(train, test)` pairs, one per fold.
pub fn kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let folds = kfold_indices(ds.len(), k, seed)?;
    let mut out = Vec::with_capacity(k);
    for (i, test) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        out.push((
            ds.subset(format!("{}-fold{i}-train", ds.name), &train),
            ds.subset(format!("{}-fold{i}-test", ds.name), test),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn synthetic(n: usize, schema: Schema) -> Dataset {
        let labels = schema.labels();
        let examples = (0..n)
            .map(|i| LabeledExample::new(format!("نص {i}"), labels[i % labels.len()]))
            .collect();
        Dataset::new("synthetic", schema, examples).unwrap()
    }

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::File::create(&path).unwrap().write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_two_rows() {
        let (_d, path) = write_tmp("text,label\nجميل,pos\n\"سيء, جدا\",neg\n");
        let ds = load_dataset(&path, Schema::TwoClass).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.examples()[1].text, "سيء, جدا");
        assert_eq!(ds.class_counts(), vec![1, 1]);
    }

    #[test]
    fn neutral_rejected_under_two_class_with_line() {
        let (_d, path) = write_tmp("text,label\nجميل,pos\nعادي,neu\n");
        let err = load_dataset(&path, Schema::TwoClass).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");
        assert!(load_dataset(&path, Schema::ThreeClass).is_ok());
    }

    #[test]
    fn bad_header_and_label() {
        let (_d, path) = write_tmp("body,label\nx,pos\n");
        assert!(load_dataset(&path, Schema::TwoClass).unwrap_err().to_string().contains(":1:"));
        let (_d, path) = write_tmp("text,label\nx,pos\ny,happy\n");
        let err = load_dataset(&path, Schema::TwoClass).unwrap_err();
        assert!(err.to_string().contains(":3:") && err.to_string().contains("happy"), "{err}");
    }

    #[test]
    fn majority_rule_examples() {
        use Judgement::*;
        let rec = |j: [Judgement; 3]| AnnotationRecord {
            text: "x".into(),
            judge_labels: j.to_vec(),
        };
        let p = Sentiment(Label::Positive);
        let n = Sentiment(Label::Negative);
        let u = Sentiment(Label::Neutral);
        assert_eq!(majority_label(&rec([p, p, n]), Schema::ThreeClass).unwrap(), Some(Label::Positive));
        assert_eq!(majority_label(&rec([p, n, u]), Schema::ThreeClass).unwrap(), None);
        assert_eq!(majority_label(&rec([n, n, n]), Schema::TwoClass).unwrap(), Some(Label::Negative));
        assert_eq!(majority_label(&rec([u, u, p]), Schema::TwoClass).unwrap(), None);
        assert_eq!(majority_label(&rec([NotSudanese, NotSudanese, p]), Schema::ThreeClass).unwrap(), None);
        assert_eq!(majority_label(&rec([NotSudanese, p, p]), Schema::ThreeClass).unwrap(), Some(Label::Positive));
        let short = AnnotationRecord {
            text: "x".into(),
            judge_labels: vec![p, p],
        };
        assert!(aggregate_annotations(&[short], Schema::TwoClass, "x").is_err());
    }

    #[test]
    fn annotation_csv() {
        let (_d, path) = write_tmp("text,judge1,judge2,judge3\na,pos,pos,neg\nb,notsud,notsud,pos\nc,neu,neu,neu\n");
        let recs = load_annotations(&path).unwrap();
        let ds = aggregate_annotations(&recs, Schema::TwoClass, "ann").unwrap();
        assert_eq!(ds.len(), 1);
        let ds3 = aggregate_annotations(&recs, Schema::ThreeClass, "ann").unwrap();
        assert_eq!(ds3.class_counts(), vec![1, 0, 1]);
        let (_d, bad) = write_tmp("text,judge1,judge2,judge3\na,pos,maybe,neg\n");
        assert!(load_annotations(&bad).unwrap_err().to_string().contains(":2:"));
    }

    #[test]
    fn split_sizes_by_hand() {
        assert_eq!(split_sizes(4000, (0.8, 0.1, 0.1)).unwrap(), (3200, 400, 400));
        assert_eq!(split_sizes(10, (0.8, 0.1, 0.1)).unwrap(), (8, 1, 1));
        assert_eq!(split_sizes(7, (0.8, 0.1, 0.1)).unwrap(), (7, 0, 0));
        assert!(split_sizes(10, (0.8, 0.1, 0.2)).is_err());
        assert!(split_sizes(10, (1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn split_is_deterministic_and_rejects_empty() {
        let ds = synthetic(50, Schema::TwoClass);
        let a = split_dataset(&ds, (0.8, 0.1, 0.1), 11).unwrap();
        let b = split_dataset(&ds, (0.8, 0.1, 0.1), 11).unwrap();
        assert_eq!(a, b);
        let empty = Dataset::new("e", Schema::TwoClass, vec![]).unwrap();
        assert!(split_dataset(&empty, (0.8, 0.1, 0.1), 1).is_err());
    }

    #[test]
    fn kfold_sizes() {
        let folds = kfold_indices(4000, 10, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 400));
        assert!(kfold_indices(10, 1, 0).is_err());
        assert!(kfold_indices(10, 11, 0).is_err());
        let sizes: Vec<usize> = kfold_indices(11, 3, 0).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
    }

    fn sorted_texts(parts: &[&Dataset]) -> Vec<String> {
        let mut v: Vec<String> = parts.iter().flat_map(|d| d.examples().iter().map(|e| e.text.clone())).collect();
        v.sort();
        v
    }

    proptest! {
        #[test]
        fn split_preserves_multiset(n in 1usize..200, seed in any::<u64>()) {
            let ds = synthetic(n, Schema::ThreeClass);
            let (tr, va, te) = split_dataset(&ds, (0.8, 0.1, 0.1), seed).unwrap();
            prop_assert_eq!(sorted_texts(&[&tr, &va, &te]), sorted_texts(&[&ds]));
        }

        #[test]
        fn kfold_partitions(n in 2usize..200, k in 2usize..20, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let ds = synthetic(n, Schema::TwoClass);
            let folds = kfold(&ds, k, seed).unwrap();
            let tests: Vec<&Dataset> = folds.iter().map(|(_, t)| t).collect();
            prop_assert_eq!(sorted_texts(&tests), sorted_texts(&[&ds]));
            let max = folds.iter().map(|(_, t)| t.len()).max().unwrap();
            let min = folds.iter().map(|(_, t)| t.len()).min().unwrap();
            prop_assert!(max - min <= 1);
            for (train, test) in &folds {
                prop_assert_eq!(sorted_texts(&[train, test]), sorted_texts(&[&ds]));
            }
        }

        #[test]
        fn class_counts_match_recount(labels in prop::collection::vec(0usize..3, 0..100)) {
            let examples: Vec<_> = labels.iter().map(|&l| LabeledExample::new("t", Label::from_index(l).unwrap())).collect();
            let ds = Dataset::new("c", Schema::ThreeClass, examples).unwrap();
            let counts = ds.class_counts();
            for (c, &count) in counts.iter().enumerate() {
                prop_assert_eq!(count, labels.iter().filter(|&&l| l == c).count());
            }
        }
    }
}
