//! One function per subcommand. Each writes its artifacts plus a summary
//! JSON, and echoes the summary on stdout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use psdetect::dataset::{
    build_vocab_on, documents_from_records, documents_from_scripts, encode_documents, Document, TokenMode,
};
use psdetect::eval::{
    confusion, cross_validate, metrics, write_comparison_csv, ClassifierTrainer, ComparisonRow, ConfusionMatrix,
    DocumentTrainer, MetricSummary, Metrics, DEFAULT_THRESHOLD,
};
use psdetect::nn::split::DEFAULT_RATIOS;
use psdetect::nn::{self, load_checkpoint, save_checkpoint, split_traditional, ModelConfig, TrainConfig};
use psdetect::par::Execution;
use psdetect::pipeline::{build_records, ingest_corpus, merge_corpora, read_jsonl, write_jsonl, CorpusManifest};
use psdetect::stats::{corpus_report, LabelSummary};
use psdetect::synth::{write_corpus, GeneratorSpec};
use psdetect::tokenizer::{Stoplist, Vocabulary, DEFAULT_CAP, DEFAULT_MAX_LEN};
use psdetect::{Label, SourceScript};
use serde::{Deserialize, Serialize};

use crate::args::{
    CrossvalArgs, EvalArgs, GenArgs, InputArgs, ModelKind, ModelOptions, PipelineArgs, ReportArgs, StatsArgs,
    TrainArgs, VocabArgs, VocabOptions,
};
use crate::UsageError;

fn require<T>(value: Option<T>, flag: &str) -> Result<T, UsageError> {
    value.ok_or_else(|| UsageError(format!("missing required {flag} (flag or config)")))
}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn manifest_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.csv")
    } else {
        path.to_path_buf()
    }
}

/// `data.jsonl` → `data.summary.json`, next to the artifact.
fn summary_path_for(artifact: &Path) -> PathBuf {
    artifact.with_extension("summary.json")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create_parent(file: &Path) -> Result<()> {
    match file.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => create_dir(parent),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, &text).with_context(|| format!("writing {}", path.display()))
}

fn write_summary<T: Serialize>(path: &Path, summary: &T) -> Result<()> {
    write_json(path, summary)?;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{}", serde_json::to_string_pretty(summary)?) {
        // a closed pipe (`| head`) is the reader's choice, not a failure
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn load_scripts(manifest: &Path, exec: Execution) -> Result<(Vec<SourceScript>, Vec<String>)> {
    let manifest = CorpusManifest::load(&manifest_file(manifest))?;
    let ingested = ingest_corpus(&manifest, exec);
    let errors: Vec<String> = ingested.errors.iter().map(ToString::to_string).collect();
    for err in &errors {
        log::warn!("skipping unreadable script: {err}");
    }
    if ingested.scripts.is_empty() {
        bail!("no readable scripts in {}", manifest.root.display());
    }
    Ok((ingested.scripts, errors))
}

fn load_documents(input: &InputArgs, exec: Execution) -> Result<(Vec<Document>, TokenMode)> {
    let mode = input.mode.unwrap_or_default();
    let docs = match (&input.data, &input.manifest, mode) {
        (Some(_), Some(_), _) => return Err(usage("give either --data or --manifest, not both")),
        (None, None, _) => return Err(usage("missing input: --data or --manifest")),
        (Some(_), None, TokenMode::Raw) => {
            return Err(usage(
                "raw mode reads script text, so it needs --manifest instead of --data",
            ))
        }
        (Some(data), None, TokenMode::Ast) => {
            let records = read_jsonl(data)?.into_complete()?;
            documents_from_records(&records, exec)
        }
        (None, Some(manifest), TokenMode::Ast) => {
            let (scripts, _) = load_scripts(manifest, exec)?;
            documents_from_records(&build_records(&scripts, exec), exec)
        }
        (None, Some(manifest), TokenMode::Raw) => {
            let (scripts, _) = load_scripts(manifest, exec)?;
            documents_from_scripts(&scripts, TokenMode::Raw, exec)
        }
    };
    if docs.is_empty() {
        bail!("input holds no labeled scripts");
    }
    Ok((docs, mode))
}

fn stoplist(opts: &VocabOptions) -> Result<Stoplist> {
    match (&opts.stoplist, opts.no_stoplist) {
        (Some(_), true) => Err(usage("--stoplist and --no-stoplist conflict")),
        (Some(path), false) => Ok(Stoplist::load(path)?),
        (None, true) => Ok(Stoplist::empty()),
        (None, false) => Ok(Stoplist::administration_defaults()),
    }
}

fn label_counts(docs: &[Document]) -> LabelCounts {
    let malicious = docs.iter().filter(|d| d.label == Label::Malicious).count();
    LabelCounts {
        benign: docs.len() - malicious,
        malicious,
    }
}

#[derive(Serialize)]
struct LabelCounts {
    benign: usize,
    malicious: usize,
}

#[derive(Serialize)]
struct Scored {
    samples: usize,
    threshold: f64,
    confusion: ConfusionMatrix,
    metrics: Metrics,
}

fn score(probs: &[f64], labels: &[Label], threshold: f64) -> Result<Scored> {
    let cm = confusion(probs, labels, threshold)?;
    Ok(Scored {
        samples: probs.len(),
        threshold,
        confusion: cm,
        metrics: metrics(&cm),
    })
}

// ---- gen ----

#[derive(Serialize)]
struct GenSummary {
    command: &'static str,
    spec: GeneratorSpec,
    scripts: usize,
    manifest: &'static str,
}

pub fn gen(a: GenArgs) -> Result<()> {
    let out = require(a.out, "--out")?;
    let spec = GeneratorSpec {
        seed: require(a.seed, "--seed")?,
        n_benign: a.benign.unwrap_or(20),
        n_malicious: a.malicious.unwrap_or(20),
        obfuscation: a.obfuscation.unwrap_or(1.0),
    };
    if !(0.0..=1.0).contains(&spec.obfuscation) {
        return Err(usage(format!("--obfuscation {} not in [0, 1]", spec.obfuscation)));
    }
    create_dir(&out)?;
    let manifest = write_corpus(&spec, &out)?;
    write_summary(
        &out.join("summary.json"),
        &GenSummary {
            command: "gen",
            scripts: manifest.entries.len(),
            spec,
            manifest: "manifest.csv",
        },
    )
}

// ---- pipeline ----

#[derive(Serialize)]
struct PipelineSummary {
    command: &'static str,
    records: usize,
    labels: LabelCounts,
    pairs: usize,
    error_nodes: usize,
    duplicates_dropped: usize,
    ingest_errors: Vec<String>,
}

pub fn pipeline(a: PipelineArgs, exec: Execution) -> Result<()> {
    let manifest = require(a.manifest, "--manifest")?;
    let out = require(a.out, "--out")?;
    let (mut scripts, mut ingest_errors) = load_scripts(&manifest, exec)?;
    let mut loaded = scripts.len();
    for extra in &a.merge {
        let (more, errors) = load_scripts(extra, exec)?;
        loaded += more.len();
        ingest_errors.extend(errors);
        scripts = merge_corpora(scripts, more);
    }
    let records = build_records(&scripts, exec);
    create_parent(&out)?;
    write_jsonl(&records, &out)?;
    let docs = documents_from_records(&records, exec);
    write_summary(
        &summary_path_for(&out),
        &PipelineSummary {
            command: "pipeline",
            records: records.len(),
            labels: label_counts(&docs),
            pairs: records.iter().map(|r| r.pairs.len()).sum(),
            error_nodes: records
                .iter()
                .flat_map(|r| &r.pairs)
                .filter(|p| p.ast_type == psdetect::AstKind::ErrorAst)
                .count(),
            duplicates_dropped: loaded - scripts.len(),
            ingest_errors,
        },
    )
}

// ---- vocab ----

#[derive(Serialize)]
struct VocabSummary {
    command: &'static str,
    mode: TokenMode,
    documents: usize,
    cap: usize,
    size: usize,
    stoplist_sha256: String,
    top_tokens: Vec<String>,
}

pub fn vocab(a: VocabArgs, exec: Execution) -> Result<()> {
    let out = require(a.out, "--out")?;
    let (docs, mode) = load_documents(&a.input, exec)?;
    let cap = a.vocab.cap.unwrap_or(DEFAULT_CAP);
    let vocab = build_vocab_on(&docs, None, cap, &stoplist(&a.vocab)?)?;
    create_parent(&out)?;
    vocab.save(&out)?;
    write_summary(
        &summary_path_for(&out),
        &VocabSummary {
            command: "vocab",
            mode,
            documents: docs.len(),
            cap,
            size: vocab.len(),
            stoplist_sha256: vocab.stoplist_digest().to_string(),
            top_tokens: vocab.tokens().iter().take(20).cloned().collect(),
        },
    )
}

// ---- stats ----

#[derive(Serialize)]
struct StatsSummary {
    command: &'static str,
    scripts: usize,
    benign: Option<LabelSummary>,
    malicious: Option<LabelSummary>,
    ingest_errors: Vec<String>,
}

pub fn stats(a: StatsArgs, exec: Execution) -> Result<()> {
    let manifest = require(a.manifest, "--manifest")?;
    let out = require(a.out, "--out")?;
    let (scripts, ingest_errors) = load_scripts(&manifest, exec)?;
    let report = corpus_report(&scripts, exec)?;
    create_dir(&out)?;
    report.write_scripts_csv(fs::File::create(out.join("scripts.csv"))?)?;
    report.write_summary_csv(fs::File::create(out.join("labels.csv"))?)?;
    write_summary(
        &out.join("summary.json"),
        &StatsSummary {
            command: "stats",
            scripts: report.per_script.len(),
            benign: report.summary(Label::Benign).cloned(),
            malicious: report.summary(Label::Malicious).cloned(),
            ingest_errors,
        },
    )
}

// ---- train ----

/// What `eval` needs to re-encode inputs the way training did.
#[derive(Serialize, Deserialize)]
struct RunInfo {
    model: ModelKind,
    mode: TokenMode,
}

#[derive(Serialize)]
struct Hyperparameters {
    max_epochs: usize,
    patience: usize,
    min_delta: f64,
    batch_size: usize,
    learning_rate: f64,
    target_train_accuracy: Option<f64>,
    seed: u64,
}

impl From<&TrainConfig> for Hyperparameters {
    fn from(tc: &TrainConfig) -> Self {
        Hyperparameters {
            max_epochs: tc.max_epochs,
            patience: tc.patience,
            min_delta: tc.min_delta,
            batch_size: tc.batch_size,
            learning_rate: tc.learning_rate,
            target_train_accuracy: tc.target_train_accuracy,
            seed: tc.seed,
        }
    }
}

fn model_config(m: &ModelOptions, vocab_size: usize) -> ModelConfig {
    let d = ModelConfig::default();
    ModelConfig {
        vocab_size,
        embed_dim: m.embed_dim.unwrap_or(d.embed_dim),
        hidden_dim: m.hidden_dim.unwrap_or(d.hidden_dim),
        dense_dim: m.dense_dim.unwrap_or(d.dense_dim),
        dropout: m.dropout.unwrap_or(d.dropout),
        bidirectional: m.model == Some(ModelKind::Bilstm),
        max_len: m.max_len.unwrap_or(DEFAULT_MAX_LEN),
    }
}

fn train_config(m: &ModelOptions, seed: u64, exec: Execution) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        max_epochs: m.epochs.unwrap_or(d.max_epochs),
        patience: m.patience.unwrap_or(d.patience),
        min_delta: m.min_delta.unwrap_or(d.min_delta),
        batch_size: m.batch_size.unwrap_or(d.batch_size),
        learning_rate: m.learning_rate.unwrap_or(d.learning_rate),
        seed,
        target_train_accuracy: m.target_accuracy,
        exec,
    }
}

#[derive(Serialize)]
struct TrainSummary {
    command: &'static str,
    model: String,
    mode: TokenMode,
    config: ModelConfig,
    hyperparameters: Hyperparameters,
    split: SplitSizes,
    vocabulary: &'static str,
    best_epoch: usize,
    stopped_epoch: usize,
    stop_reason: nn::StopReason,
    test: Option<Scored>,
}

#[derive(Serialize)]
struct SplitSizes {
    train: usize,
    validation: usize,
    test: usize,
    dropped: usize,
}

pub fn train(a: TrainArgs, exec: Execution) -> Result<()> {
    let seed = require(a.model.seed, "--seed")?;
    let out = require(a.out.clone(), "--out")?;
    let kind = a.model.model.unwrap_or(ModelKind::Lstm);
    let (docs, mode) = load_documents(&a.input, exec)?;
    let labels: Vec<Label> = docs.iter().map(|d| d.label).collect();
    let splits = split_traditional(&labels, DEFAULT_RATIOS, seed, a.balance)?;
    let (vocab, vocabulary) = match &a.vocab_file {
        Some(path) => (Vocabulary::load(path, None)?, "file"),
        None => {
            let cap = a.vocab.cap.unwrap_or(DEFAULT_CAP);
            (
                build_vocab_on(&docs, Some(&splits.train), cap, &stoplist(&a.vocab)?)?,
                "training split",
            )
        }
    };
    let config = model_config(&a.model, vocab.len());
    let tc = train_config(&a.model, seed, exec);
    let examples = encode_documents(&docs, &vocab, config.max_len, exec);
    let (model, history) = nn::train(&config, &examples, &splits, &tc)?;

    create_dir(&out)?;
    save_checkpoint(&model, &out.join("model.ckpt"))?;
    vocab.save(&out.join("vocab.json"))?;
    history.write_csv(fs::File::create(out.join("history.csv"))?)?;
    write_json(&out.join("splits.json"), &splits)?;
    write_json(&out.join("run.json"), &RunInfo { model: kind, mode })?;

    let test = if splits.test.is_empty() {
        None
    } else {
        let seqs: Vec<_> = splits.test.iter().map(|&i| examples[i].seq.clone()).collect();
        let probs = model.predict_all(&seqs, exec)?;
        let test_labels: Vec<Label> = splits.test.iter().map(|&i| labels[i]).collect();
        Some(score(&probs, &test_labels, DEFAULT_THRESHOLD)?)
    };
    write_summary(
        &out.join("summary.json"),
        &TrainSummary {
            command: "train",
            model: kind.display_name(mode),
            mode,
            hyperparameters: Hyperparameters::from(&tc),
            split: SplitSizes {
                train: splits.train.len(),
                validation: splits.validation.len(),
                test: splits.test.len(),
                dropped: splits.dropped.len(),
            },
            vocabulary,
            best_epoch: history.best_epoch,
            stopped_epoch: history.stopped_epoch(),
            stop_reason: history.stop_reason,
            config,
            test,
        },
    )
}

// ---- eval ----

#[derive(Serialize)]
struct EvalSummary {
    command: &'static str,
    model: String,
    mode: TokenMode,
    #[serde(flatten)]
    scored: Scored,
}

#[derive(Serialize)]
struct Prediction<'a> {
    script_id: &'a str,
    label: u8,
    probability: f64,
    predicted: u8,
}

pub fn eval(a: EvalArgs, exec: Execution) -> Result<()> {
    let dir = require(a.model_dir, "--model-dir")?;
    let out = require(a.out, "--out")?;
    let threshold = a.threshold.unwrap_or(DEFAULT_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(usage(format!("--threshold {threshold} not in [0, 1]")));
    }
    let model = load_checkpoint(&dir.join("model.ckpt"))?;
    let vocab = Vocabulary::load(&dir.join("vocab.json"), None)?;
    let run_path = dir.join("run.json");
    let run: RunInfo = serde_json::from_str(
        &fs::read_to_string(&run_path).with_context(|| format!("reading {}", run_path.display()))?,
    )
    .with_context(|| format!("parsing {}", run_path.display()))?;
    let input = InputArgs {
        data: a.data,
        manifest: a.manifest,
        mode: Some(run.mode),
    };
    let (docs, mode) = load_documents(&input, exec)?;
    let examples = encode_documents(&docs, &vocab, model.config.max_len, exec);
    let seqs: Vec<_> = examples.iter().map(|e| e.seq.clone()).collect();
    let probs = model.predict_all(&seqs, exec)?;
    let labels: Vec<Label> = docs.iter().map(|d| d.label).collect();

    create_dir(&out)?;
    let mut w = csv::Writer::from_path(out.join("predictions.csv"))?;
    for (doc, &p) in docs.iter().zip(&probs) {
        w.serialize(Prediction {
            script_id: &doc.id,
            label: doc.label.as_u8(),
            probability: p,
            predicted: u8::from(p >= threshold),
        })?;
    }
    w.flush()?;
    write_summary(
        &out.join("summary.json"),
        &EvalSummary {
            command: "eval",
            model: run.model.display_name(mode),
            mode,
            scored: score(&probs, &labels, threshold)?,
        },
    )
}

// ---- crossval ----

#[derive(Serialize)]
struct CrossvalSummary {
    command: &'static str,
    model: String,
    mode: TokenMode,
    folds: usize,
    seed: u64,
    vocabulary: &'static str,
    metrics: Metrics,
    stddev: Metrics,
    defined_folds: [usize; 4],
    per_fold: Vec<Metrics>,
}

pub fn crossval(a: CrossvalArgs, exec: Execution) -> Result<()> {
    let seed = require(a.model.seed, "--seed")?;
    let out = require(a.out.clone(), "--out")?;
    let k = a.folds.unwrap_or(5);
    let holdout = a.holdout.unwrap_or(0.15);
    if !(0.0..1.0).contains(&holdout) {
        return Err(usage(format!("--holdout {holdout} not in [0, 1)")));
    }
    if a.fold_vocab && a.vocab_file.is_some() {
        return Err(usage("--fold-vocab and --vocab conflict"));
    }
    let kind = a.model.model.unwrap_or(ModelKind::Lstm);
    let (docs, mode) = load_documents(&a.input, exec)?;
    let labels: Vec<Label> = docs.iter().map(|d| d.label).collect();
    let tc = train_config(&a.model, seed, exec);
    let stop = stoplist(&a.vocab)?;
    let cap = a.vocab.cap.unwrap_or(DEFAULT_CAP);
    let max_len = a.model.max_len.unwrap_or(DEFAULT_MAX_LEN);

    let (report, vocabulary) = if a.fold_vocab {
        let trainer = DocumentTrainer {
            model: model_config(&a.model, 1),
            train: tc,
            documents: &docs,
            cap,
            max_len,
            stoplist: &stop,
            holdout,
        };
        (cross_validate(&trainer, &labels, k, seed, exec)?, "per-fold")
    } else {
        let (vocab, vocabulary) = match &a.vocab_file {
            Some(path) => (Vocabulary::load(path, None)?, "file"),
            None => (build_vocab_on(&docs, None, cap, &stop)?, "corpus"),
        };
        let examples = encode_documents(&docs, &vocab, max_len, exec);
        let trainer = ClassifierTrainer {
            model: model_config(&a.model, vocab.len()),
            train: tc,
            examples: &examples,
            holdout,
        };
        (cross_validate(&trainer, &labels, k, seed, exec)?, vocabulary)
    };

    create_dir(&out)?;
    report.write_csv(fs::File::create(out.join("folds.csv"))?)?;
    let stddev = |s: &MetricSummary| s.stddev;
    write_summary(
        &out.join("summary.json"),
        &CrossvalSummary {
            command: "crossval",
            model: kind.display_name(mode),
            mode,
            folds: k,
            seed,
            vocabulary,
            metrics: report.mean_metrics(),
            stddev: Metrics {
                accuracy: stddev(&report.accuracy),
                precision: stddev(&report.precision),
                recall: stddev(&report.recall),
                f1: stddev(&report.f1),
            },
            defined_folds: [
                report.accuracy.defined_folds,
                report.precision.defined_folds,
                report.recall.defined_folds,
                report.f1.defined_folds,
            ],
            per_fold: report.folds.iter().map(|f| f.metrics).collect(),
        },
    )
}

// ---- report ----

#[derive(Deserialize)]
struct RunSummary {
    command: String,
    model: String,
    metrics: Metrics,
}

#[derive(Serialize)]
struct ReportSummary {
    command: &'static str,
    rows: Vec<ComparisonRow>,
}

pub fn report(a: ReportArgs) -> Result<()> {
    let out = require(a.out, "--out")?;
    if a.runs.is_empty() {
        return Err(usage("give at least one --run directory"));
    }
    let mut rows = Vec::new();
    for dir in &a.runs {
        let path = dir.join("summary.json");
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let run: RunSummary = serde_json::from_str(&text)
            .with_context(|| format!("{} is not an eval or crossval summary", path.display()))?;
        if run.command != "eval" && run.command != "crossval" {
            bail!(
                "{}: expected an eval or crossval summary, found {}",
                path.display(),
                run.command
            );
        }
        rows.push(ComparisonRow {
            model: run.model,
            metrics: run.metrics,
        });
    }
    create_parent(&out)?;
    write_comparison_csv(&rows, fs::File::create(&out)?)?;
    write_summary(
        &summary_path_for(&out),
        &ReportSummary {
            command: "report",
            rows,
        },
    )
}
