use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use scm_core::corpus::{aggregate_annotations, load_annotations, load_dataset, split_dataset, Dataset, Schema};
use scm_core::encoder::{load_embeddings, Vocabulary};
use scm_core::model::{build_scm, load_checkpoint, predict as classify, save_checkpoint, ModelGradProbe, ScmModel};
use scm_core::nn::gradcheck::{grad_check, layer_suite};
use scm_core::pipeline::{encode_dataset, fit_encoder, tokenize_dataset, TokenizedDataset};
use scm_core::report::{emit_report, emit_timing, InputFile, RunReport, Timing};
use scm_core::trainer::{self, cross_validate};

use crate::config::RunConfig;
use crate::Usage;

pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";

const LAYER_TOLERANCE: f64 = 1e-5;
const MODEL_TOLERANCE: f64 = 1e-4;

/// State shared by every command: the merged configuration, the report being
/// built and the files read so far.
pub struct Run {
    cfg: RunConfig,
    out_dir: PathBuf,
    report: RunReport,
    inputs: Vec<PathBuf>,
    started: Instant,
}

impl Run {
    pub fn new(command: &str, cfg: RunConfig, out_dir: PathBuf) -> Result<Run> {
        std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let mut report = RunReport::new(command, cfg.train.seed);
        report.echo_config(cfg.entries().into_iter().collect());
        report.add_detail("timing_file", TIMING_FILE)?;
        Ok(Run {
            cfg,
            out_dir,
            report,
            inputs: Vec::new(),
            started: Instant::now(),
        })
    }

    fn input(&mut self, key: &str, path: &Path) -> Result<()> {
        self.report.inputs.insert(key.to_owned(), InputFile::hash(path)?);
        self.inputs.push(path.to_path_buf());
        Ok(())
    }

    fn required(&self, key: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        value
            .clone()
            .ok_or_else(|| Usage(format!("--{key} is required (or set {key}= in the config)")).into())
    }

    /// Path of an output file; refuses to overwrite anything that was read.
    fn output(&self, path: PathBuf) -> Result<PathBuf> {
        let target = std::fs::canonicalize(&path).ok();
        for input in &self.inputs {
            if target.is_some() && std::fs::canonicalize(input).ok() == target {
                return Err(Usage(format!("output {} would overwrite an input", path.display())).into());
            }
        }
        Ok(path)
    }

    fn artifact(&self, name: &str) -> Result<PathBuf> {
        self.output(self.out_dir.join(name))
    }

    fn detail(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        Ok(self.report.add_detail(key, value)?)
    }

    fn finish(mut self, require_metrics: bool) -> Result<()> {
        self.report.summarize();
        let report_path = self.artifact(REPORT_FILE)?;
        emit_report(&self.report, &report_path, require_metrics)?;
        let timing = Timing {
            command: self.report.command.clone(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        emit_timing(&timing, self.artifact(TIMING_FILE)?)?;
        log::info!("wrote {}", report_path.display());
        Ok(())
    }

    fn schema(&self) -> Result<Schema> {
        Schema::from_num_classes(self.cfg.scm.num_classes).map_err(|e| Usage(e.to_string()).into())
    }

    /// Loads the configured dataset, aggregating judge columns when present.
    fn dataset(&mut self) -> Result<Dataset> {
        let path = self.required("dataset", &self.cfg.paths.dataset)?;
        self.input("dataset", &path)?;
        if let Some(stopwords) = self.cfg.paths.stopwords.clone() {
            self.input("stopwords", &stopwords)?;
        }
        let schema = self.schema()?;
        if !has_judge_columns(&path)? {
            return Ok(load_dataset(&path, schema)?);
        }
        let records = load_annotations(&path)?;
        let name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let ds = aggregate_annotations(&records, schema, &name)?;
        self.detail(
            "aggregation",
            json!({ "records": records.len(), "kept": ds.len(), "discarded": records.len() - ds.len() }),
        )?;
        Ok(ds)
    }

    fn model(&mut self) -> Result<(ScmModel<f64>, Vocabulary)> {
        let vocab_path = self.required("vocab", &self.cfg.paths.vocab)?;
        let ckpt_path = self.required("checkpoint", &self.cfg.paths.checkpoint)?;
        self.input("vocab", &vocab_path)?;
        self.input("checkpoint", &ckpt_path)?;
        let vocab = Vocabulary::load(&vocab_path)?;
        let model = load_checkpoint::<f64>(&ckpt_path, &vocab)?;
        // The architecture comes from the checkpoint, not the flags.
        self.cfg.scm = model.config().clone();
        self.report.echo_config(self.cfg.entries().into_iter().collect());
        Ok((model, vocab))
    }
}

fn has_judge_columns(path: &Path) -> Result<bool> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut header = String::new();
    BufReader::new(file).read_line(&mut header)?;
    Ok(header.trim_start_matches('\u{feff}').split(',').any(|c| c.trim() == "judge1"))
}

pub fn normalize(mut run: Run, input: &Path, out: &Path) -> Result<()> {
    run.input("input", input)?;
    if let Some(stopwords) = run.cfg.paths.stopwords.clone() {
        run.input("stopwords", &stopwords)?;
    }
    let out = run.output(out.to_path_buf())?;
    let pipeline = run.cfg.pipeline()?;

    let mut reader = csv::Reader::from_path(input).with_context(|| format!("opening {}", input.display()))?;
    let headers = reader.headers()?.clone();
    let column = headers
        .iter()
        .position(|h| h.trim_start_matches('\u{feff}') == "text")
        .with_context(|| format!("{}: no `text` column", input.display()))?;
    let mut writer = csv::Writer::from_path(&out).with_context(|| format!("creating {}", out.display()))?;
    writer.write_record(&headers)?;
    let (mut rows, mut emptied) = (0usize, 0usize);
    for record in reader.records() {
        let record = record.with_context(|| format!("reading {}", input.display()))?;
        let cleaned = pipeline.tokens(&record[column]).join(" ");
        emptied += usize::from(cleaned.is_empty());
        let fields = record.iter().enumerate().map(|(i, f)| if i == column { cleaned.as_str() } else { f });
        writer.write_record(fields)?;
        rows += 1;
    }
    writer.flush()?;
    run.detail("rows", rows)?;
    run.detail("empty_after_preprocessing", emptied)?;
    run.detail("output", out.display().to_string())?;
    run.finish(false)
}

pub fn build_vocab(mut run: Run) -> Result<()> {
    let ds = run.dataset()?;
    let tok = tokenize_dataset(&ds, &run.cfg.pipeline()?);
    let (vocab, _) = fit_encoder(&tok, &run.cfg.scm)?;
    vocab.save(run.artifact("vocab.tsv")?)?;
    run.detail("preprocessing", tok.stats())?;
    run.detail("vocabulary", json!({ "size": vocab.len(), "hash": vocab.content_hash() }))?;
    run.finish(false)
}

pub fn train(mut run: Run) -> Result<()> {
    let ds = run.dataset()?;
    let seed = run.cfg.train.seed;
    let (train_raw, val_raw, test_raw) = split_dataset(&ds, (0.8, 0.1, 0.1), seed)?;
    let pipeline = run.cfg.pipeline()?;
    let train_tok = tokenize_dataset(&train_raw, &pipeline);
    let val_tok = tokenize_dataset(&val_raw, &pipeline);
    let test_tok = tokenize_dataset(&test_raw, &pipeline);
    let (vocab, tfidf) = fit_encoder(&train_tok, &run.cfg.scm)?;

    let pretrained = match run.cfg.paths.embeddings.clone() {
        Some(path) => {
            run.input("embeddings", &path)?;
            let (table, load) = load_embeddings::<f64>(&path, &vocab, run.cfg.scm.embedding_dim, run.cfg.scm.seed)?;
            log::info!("embedding coverage {:.3}", load.coverage);
            run.detail("embeddings", load)?;
            Some(table)
        }
        None => None,
    };
    let mut model = build_scm(&run.cfg.scm, &vocab, pretrained)?;
    model.tfidf = tfidf;
    let train_enc = encode_dataset(&model, &vocab, &train_tok);
    let val_enc = encode_dataset(&model, &vocab, &val_tok);
    let test_enc = encode_dataset(&model, &vocab, &test_tok);
    let history = trainer::train(&mut model, &train_enc, Some(&val_enc), &run.cfg.train)?;
    let test = trainer::evaluate(&model, &test_enc)?;

    save_checkpoint(&model, run.artifact("model.ckpt")?)?;
    vocab.save(run.artifact("vocab.tsv")?)?;
    history.write_csv(run.artifact("history.csv")?)?;
    std::fs::write(run.artifact("metrics.json")?, test.to_json())?;
    // Lets evaluate/predict reuse the exact preprocessing via --config.
    std::fs::write(run.artifact("run.conf")?, run.cfg.to_kv_text())?;

    let stats = |t: &TokenizedDataset| t.stats();
    run.detail(
        "preprocessing",
        json!({ "train": stats(&train_tok), "validation": stats(&val_tok), "test": stats(&test_tok) }),
    )?;
    run.detail("vocabulary", json!({ "size": vocab.len(), "hash": vocab.content_hash() }))?;
    run.detail("parameter_count", model.parameter_count())?;
    run.detail("history", &history)?;
    run.report.folds.push(test);
    run.finish(true)
}

pub fn evaluate(mut run: Run) -> Result<()> {
    let (model, vocab) = run.model()?;
    let ds = run.dataset()?;
    let tok = tokenize_dataset(&ds, &run.cfg.pipeline()?);
    let enc = encode_dataset(&model, &vocab, &tok);
    let metrics = trainer::evaluate(&model, &enc)?;
    std::fs::write(run.artifact("metrics.json")?, metrics.to_json())?;
    run.detail("preprocessing", tok.stats())?;
    run.report.folds.push(metrics);
    run.finish(true)
}

pub fn crossval(mut run: Run, k: usize) -> Result<()> {
    run.report.config.insert("k".into(), k.to_string());
    let ds = run.dataset()?;
    let tok = tokenize_dataset(&ds, &run.cfg.pipeline()?);
    run.detail("preprocessing", tok.stats())?;
    let result = cross_validate(&run.cfg.scm, &run.cfg.train, &tok, k, run.cfg.train.seed, |_| {})?;
    let mut folds = Vec::new();
    for fold in result.folds {
        fold.history.write_csv(run.artifact(&format!("history_fold{}.csv", fold.fold))?)?;
        let mut value = serde_json::to_value(&fold)?;
        if let Value::Object(map) = &mut value {
            map.remove("metrics");
        }
        folds.push(value);
        run.report.folds.push(fold.metrics);
    }
    run.detail("folds", folds)?;
    run.finish(true)
}

pub fn predict(mut run: Run, texts: Vec<String>, input: Option<&Path>) -> Result<()> {
    let (model, vocab) = run.model()?;
    let mut texts = texts;
    if let Some(path) = input {
        run.input("input", path)?;
        let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let column = reader
            .headers()?
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == "text")
            .with_context(|| format!("{}: no `text` column", path.display()))?;
        for record in reader.records() {
            texts.push(record?[column].to_owned());
        }
    }
    if texts.is_empty() {
        return Err(Usage("nothing to classify: pass --text or --in".into()).into());
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let predictions = classify(&model, &vocab, &run.cfg.pipeline()?, &refs)?;

    let mut lines = String::new();
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for (index, p) in predictions.iter().enumerate() {
        let mut value = serde_json::to_value(p)?;
        if let Value::Object(map) = &mut value {
            map.insert("index".into(), index.into());
        }
        lines.push_str(&serde_json::to_string(&value)?);
        lines.push('\n');
        let key = p.label().map_or("empty_after_preprocessing", |l| l.token());
        *counts.entry(key.to_owned()).or_default() += 1;
    }
    print!("{lines}");
    std::fs::write(run.artifact("predictions.jsonl")?, &lines)?;
    run.detail("predictions", predictions.len())?;
    run.detail("counts", counts)?;
    run.finish(false)
}

pub fn gradcheck(mut run: Run, points: usize, eps: f64, model_seeds: u64) -> Result<()> {
    if points == 0 || !(eps > 0.0) {
        return Err(Usage("--points must be positive and --eps > 0".into()).into());
    }
    let seed = run.cfg.train.seed;
    for (key, value) in [("points", points.to_string()), ("eps", eps.to_string()), ("model_seeds", model_seeds.to_string())] {
        run.report.config.insert(key.into(), value);
    }
    let layers = layer_suite(seed, points, eps)?;
    let mut models = Vec::new();
    for s in 0..model_seeds {
        let probe = ModelGradProbe::tiny(seed.wrapping_add(s))?;
        let check = grad_check(&probe, eps)?;
        models.push(json!({
            "seed": seed.wrapping_add(s),
            "parameters": probe.parameter_count(),
            "max_relative_error": check.max_relative_error,
        }));
    }
    let failed_layers: Vec<&str> = layers
        .iter()
        .filter(|l| !(l.max_relative_error < LAYER_TOLERANCE))
        .map(|l| l.layer.as_str())
        .collect();
    let failed_models = models
        .iter()
        .filter(|m| !(m["max_relative_error"].as_f64().unwrap_or(f64::NAN) < MODEL_TOLERANCE))
        .count();
    for l in &layers {
        println!("{:<28} {:.3e}", l.layer, l.max_relative_error);
    }
    for m in &models {
        println!("{:<28} {:.3e}", format!("model seed {}", m["seed"]), m["max_relative_error"].as_f64().unwrap_or(f64::NAN));
    }
    let passed = failed_layers.is_empty() && failed_models == 0;
    run.detail("layers", &layers)?;
    run.detail("models", &models)?;
    run.detail(
        "tolerance",
        json!({ "layer": LAYER_TOLERANCE, "model": MODEL_TOLERANCE }),
    )?;
    run.detail("passed", passed)?;
    run.finish(false)?;
    if !passed {
        bail!("gradient check failed: layers {failed_layers:?}, {failed_models} model seed(s) over tolerance");
    }
    Ok(())
}
