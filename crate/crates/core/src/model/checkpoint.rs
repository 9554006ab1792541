use std::collections::BTreeMap;
use std::path::Path;

use crate::encoder::{TfIdfModel, Vocabulary};
use crate::error::{Error, Result};
use crate::kv::KeyValue;
use crate::nn::Tensor;
use crate::scalar::Scalar;

use super::config::ScmConfig;
use super::scm::ScmModel;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "scm-checkpoint";

fn named_tensors<T: Scalar>(model: &ScmModel<T>) -> Vec<(String, &Tensor<T>)> {
    let mut out: Vec<(String, &Tensor<T>)> = model.parameters().into_iter().map(|(n, p)| (n, &p.value)).collect();
    out.push(("batchnorm.running_mean".into(), &model.batchnorm.running_mean));
    out.push(("batchnorm.running_var".into(), &model.batchnorm.running_var));
    out
}

fn named_tensors_mut<T: Scalar>(model: &mut ScmModel<T>) -> BTreeMap<String, &mut Tensor<T>> {
    let mut out = BTreeMap::new();
    out.insert("embedding".to_owned(), &mut model.embedding.value);
    for (i, conv) in model.convs.iter_mut().enumerate() {
        out.insert(format!("conv{i}.weights"), &mut conv.weights.value);
        out.insert(format!("conv{i}.bias"), &mut conv.bias.value);
    }
    out.insert("dense.weights".into(), &mut model.dense.weights.value);
    out.insert("dense.bias".into(), &mut model.dense.bias.value);
    let bn = &mut model.batchnorm;
    out.insert("batchnorm.gamma".into(), &mut bn.gamma.value);
    out.insert("batchnorm.beta".into(), &mut bn.beta.value);
    out.insert("batchnorm.running_mean".into(), &mut bn.running_mean);
    out.insert("batchnorm.running_var".into(), &mut bn.running_var);
    out.insert("head.weights".into(), &mut model.head.weights.value);
    out.insert("head.bias".into(), &mut model.head.bias.value);
    out
}

/// Serializes the model to the text checkpoint format.
pub fn write_checkpoint<T: Scalar>(model: &ScmModel<T>) -> String {
    let mut out = format!("{MAGIC} {CHECKPOINT_VERSION}\n[config]\n");
    out.push_str(&model.config().to_kv_text());
    out.push_str("[vocabulary]\n");
    out.push_str(&format!("hash={}\nsize={}\n", model.vocab_hash(), model.vocab_size()));
    if let Some(tfidf) = &model.tfidf {
        out.push_str(&format!("[tfidf]\ndocument_count={}\n", tfidf.document_count()));
        for (token, idf) in tfidf.entries() {
            out.push_str(&format!("{token}\t{idf:?}\n"));
        }
    }
    out.push_str("[tensors]\n");
    for (name, t) in named_tensors(model) {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        out.push_str(&format!("{name}\t{}\t{}\n", dims.join(","), t.len()));
        let values: Vec<String> = t.data().iter().map(|v| format!("{:?}", v.as_f64())).collect();
        out.push_str(&values.join(" "));
        out.push('\n');
    }
    out.push_str("[end]\n");
    out
}

pub fn save_checkpoint<T: Scalar>(model: &ScmModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

struct Lines<'a> {
    iter: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    origin: &'a Path,
    last: u64,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.iter.next() {
            Some((i, line)) => {
                self.last = i as u64 + 1;
                Ok(line)
            }
            None => Err(self.err("unexpected end of checkpoint")),
        }
    }

    fn peek(&mut self) -> Option<&'a str> {
        self.iter.peek().map(|&(_, l)| l)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.origin, self.last, msg.into())
    }

    fn expect(&mut self, header: &str) -> Result<()> {
        let line = self.next()?;
        if line != header {
            return Err(self.err(format!("expected {header:?}, got {line:?}")));
        }
        Ok(())
    }

    fn key_value(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| self.err(format!("expected {key}=..., got {line:?}")))
    }

    fn section_lines(&mut self) -> Vec<(u64, &'a str)> {
        let mut out = Vec::new();
        while let Some(line) = self.peek() {
            if line.starts_with('[') {
                break;
            }
            let (i, l) = self.iter.next().expect("peeked");
            self.last = i as u64 + 1;
            out.push((self.last, l));
        }
        out
    }
}

/// Parses a checkpoint. `origin` is used in error messages.
pub fn read_checkpoint<T: Scalar>(text: &str, origin: &Path) -> Result<ScmModel<T>> {
    let mut lines = Lines {
        iter: text.lines().enumerate().peekable(),
        origin,
        last: 0,
    };
    let first = lines.next()?;
    match first.strip_prefix(MAGIC).map(str::trim) {
        Some(v) if v == CHECKPOINT_VERSION.to_string() => {}
        Some(v) => return Err(lines.err(format!("unsupported checkpoint version {v:?}"))),
        None => return Err(lines.err("not a model checkpoint")),
    }

    lines.expect("[config]")?;
    let mut config = ScmConfig::default();
    for (number, line) in lines.section_lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, number, format!("expected key=value, got {line:?}")))?;
        if !config.set(k, v).map_err(|e| Error::parse(origin, number, e.to_string()))? {
            return Err(Error::parse(origin, number, format!("unknown config key {k:?}")));
        }
    }

    lines.expect("[vocabulary]")?;
    let hash = lines.key_value("hash")?.to_owned();
    let size: usize = lines
        .key_value("size")?
        .parse()
        .map_err(|_| lines.err("vocabulary size is not an integer"))?;

    let mut tfidf = None;
    if lines.peek() == Some("[tfidf]") {
        lines.next()?;
        let count: usize = lines
            .key_value("document_count")?
            .parse()
            .map_err(|_| lines.err("document_count is not an integer"))?;
        let mut entries = Vec::new();
        for (number, line) in lines.section_lines() {
            let parsed = line
                .split_once('\t')
                .and_then(|(t, v)| v.parse::<f64>().ok().map(|v| (t.to_owned(), v)));
            entries.push(parsed.ok_or_else(|| Error::parse(origin, number, format!("bad idf entry {line:?}")))?);
        }
        tfidf = Some(TfIdfModel::from_parts(count, entries));
    }

    let mut model = ScmModel::<T>::assemble(config, size, hash, None).map_err(|e| lines.err(e.to_string()))?;
    model.tfidf = tfidf;

    lines.expect("[tensors]")?;
    let mut seen = std::collections::BTreeSet::new();
    {
        let mut slots = named_tensors_mut(&mut model);
        while lines.peek() != Some("[end]") {
            let header = lines.next()?;
            let fields: Vec<&str> = header.split('\t').collect();
            if fields.len() != 3 {
                return Err(lines.err(format!("bad tensor header {header:?}")));
            }
            let name = fields[0];
            let dims: Vec<usize> = fields[1]
                .split(',')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| lines.err(format!("bad dimensions {:?}", fields[1])))?;
            let count: usize = fields[2].parse().map_err(|_| lines.err("bad value count"))?;
            let slot = slots
                .get_mut(name)
                .ok_or_else(|| lines.err(format!("unknown tensor {name:?}")))?;
            if slot.shape() != dims.as_slice() || slot.len() != count {
                return Err(lines.err(format!(
                    "tensor {name} is {:?} in the checkpoint, the configuration implies {:?}",
                    dims,
                    slot.shape()
                )));
            }
            let values = lines.next()?;
            let parsed: Vec<f64> = values
                .split(' ')
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| lines.err(format!("malformed value in tensor {name}")))?;
            if parsed.len() != count {
                return Err(lines.err(format!("tensor {name}: expected {count} values, got {}", parsed.len())));
            }
            for (dst, src) in slot.data_mut().iter_mut().zip(parsed) {
                *dst = T::lit(src);
            }
            seen.insert(name.to_owned());
        }
        lines.expect("[end]")?;
        let missing: Vec<&String> = slots.keys().filter(|k| !seen.contains(*k)).collect();
        if !missing.is_empty() {
            return Err(lines.err(format!("checkpoint is missing tensors {missing:?}")));
        }
    }
    Ok(model)
}

/// Loads a checkpoint and verifies it was trained with `vocab`.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<ScmModel<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model = read_checkpoint(&text, path)?;
    model.check_vocabulary(vocab)?;
    Ok(model)
}
