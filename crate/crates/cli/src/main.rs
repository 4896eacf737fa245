//! `coref`: preprocess, train, predict, evaluate, and analyze.
//!
//! Settings resolve in this order, later winning: built-in defaults (or the
//! checkpoint's stored config for `predict` and `hoi-off`), `--config`,
//! `--set key=value`, then the dedicated flags such as `--seed`.

mod manifest;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::info;

use coref::analysis::{hoi_off_eval, link_change, pronoun_analysis, DecisionSet, PronounLexicon, PronounReport};
use coref::corpus::{parse_conll, read_jsonlines, segment_document, to_jsonlines, Cluster, Document};
use coref::embedding::EmbeddingProvider;
use coref::hoi::HoiMethod;
use coref::metrics::{Evaluator, MetricsReport};
use coref::model::{read_predictions, write_predictions, CorefModel, Prediction};
use coref::ranker::decode_clusters;
use coref::trainer::{open_provider, train, Checkpoint, EpochLog, ProviderKind, TrainConfig};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "coref", version, about = "Span-ranking coreference with higher-order inference")]
struct Cli {
    /// Run seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Documents processed in parallel by predict, evaluate, and analyze.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Embedding container; implies `--embed-provider file`.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    embed_provider: Option<Provider>,
    #[arg(long, global = true)]
    embed_dim: Option<usize>,
    #[arg(long, global = true)]
    embed_seed: Option<u64>,
    /// Where to write the run manifest; defaults to beside the main output.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Provider {
    Hash,
    File,
}

#[derive(Subcommand)]
enum Command {
    /// Convert CoNLL-2012 files to segmented jsonlines.
    Preprocess {
        /// A `*_conll` file or a directory searched recursively.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = coref::corpus::DEFAULT_MAX_SEGMENT_LEN)]
        max_seg_len: usize,
    },
    /// Train a model and save the best dev checkpoint.
    Train {
        #[arg(long)]
        train: PathBuf,
        /// Defaults to the training documents.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a prediction dump for a jsonlines corpus.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run with this method instead of the trained one.
        #[arg(long)]
        hoi: Option<HoiMethod>,
    },
    /// Score predicted clusters against gold.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        /// Prediction dump or jsonlines corpus.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Link-change and pronoun analysis of prediction dumps.
    Analyze {
        #[arg(long)]
        before: PathBuf,
        /// Without it, the pre- and post-HOI decisions of `--before` are compared.
        #[arg(long)]
        after: Option<PathBuf>,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pronoun lexicon (`class: word word ...` lines).
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Score a model with and without its higher-order step.
    #[command(name = "hoi-off", alias = "ablate")]
    HoiOff {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            tracing::error!(error = %format!("{err:#}"), "command failed");
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

/// Bad settings are usage errors; everything else is a data or model error.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<coref::Error>() {
        Some(coref::Error::Config(_) | coref::Error::Argument(_)) => 2,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(coref::Error::Argument("--jobs must be at least 1".into()).into());
    }
    match &cli.command {
        Command::Preprocess { input, output, max_seg_len } => preprocess(cli, input, output, *max_seg_len),
        Command::Train { train, dev, out } => train_cmd(cli, train, dev.as_deref(), out),
        Command::Predict { model, input, out, hoi } => predict(cli, model, input, out, *hoi),
        Command::Evaluate { gold, pred, report } => evaluate(cli, gold, pred, report),
        Command::Analyze {
            before,
            after,
            gold,
            out,
            lexicon,
        } => analyze(cli, before, after.as_deref(), gold, out, lexicon.as_deref()),
        Command::HoiOff { model, input, report } => hoi_off(cli, model, input, report),
    }
}

/// Applies `--config`, `--set`, and the dedicated flags on top of `base`.
fn resolve_config(cli: &Cli, mut config: TrainConfig) -> Result<TrainConfig> {
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        config.apply(&text)?;
    }
    for item in &cli.set {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| coref::Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(p) = cli.embed_provider {
        config.embeddings.provider = match p {
            Provider::Hash => ProviderKind::Hash,
            Provider::File => ProviderKind::File,
        };
    }
    if let Some(path) = &cli.embeddings {
        config.embeddings.path = Some(path.display().to_string());
        if cli.embed_provider.is_none() {
            config.embeddings.provider = ProviderKind::File;
        }
    }
    if let Some(dim) = cli.embed_dim {
        config.model.emb_dim = dim;
    }
    if let Some(seed) = cli.embed_seed {
        config.embeddings.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn manifest_path(cli: &Cli, artifact: &Path) -> PathBuf {
    cli.manifest.clone().unwrap_or_else(|| manifest::default_path(artifact))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("starting worker threads")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn conll_files(input: &Path) -> Result<Vec<PathBuf>> {
    if !input.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![input.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n.to_string_lossy().ends_with("_conll")) {
                out.push(path);
            }
        }
    }
    out.sort();
    if out.is_empty() {
        bail!(coref::Error::Argument(format!("no *_conll files under {}", input.display())));
    }
    Ok(out)
}

fn preprocess(cli: &Cli, input: &Path, output: &Path, max_seg_len: usize) -> Result<()> {
    let config = resolve_config(cli, TrainConfig::default())?;
    let mut manifest = RunManifest::new("preprocess", config.seed, cli.jobs, format!("max_seg_len = {max_seg_len}\n"));
    manifest.input(input)?;
    let mut docs = Vec::new();
    for file in conll_files(input)? {
        let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        let parsed = parse_conll(&text).with_context(|| format!("parsing {}", file.display()))?;
        docs.extend(parsed);
    }
    for doc in &mut docs {
        let segments = segment_document(doc, max_seg_len)?;
        doc.segments = Some(segments.into_iter().map(|s| s.range).collect());
    }
    write_file(output, &to_jsonlines(&docs))?;
    info!(documents = docs.len(), output = %output.display(), "preprocessed");
    manifest.output(output)?;
    manifest.finish(&manifest_path(cli, output))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    best_epoch: usize,
    best_dev_avg_f1: f64,
    history: &'a [EpochLog],
}

fn train_cmd(cli: &Cli, train_path: &Path, dev_path: Option<&Path>, out: &Path) -> Result<()> {
    let mut config = resolve_config(cli, TrainConfig::default())?;
    let provider = open_provider(&mut config)?;
    let mut manifest = RunManifest::new("train", config.seed, cli.jobs, config.to_text());
    manifest.input(train_path)?;
    let train_docs = read_jsonlines(train_path)?;
    let dev_docs = match dev_path {
        Some(p) => {
            manifest.input(p)?;
            read_jsonlines(p)?
        }
        None => Vec::new(),
    };
    if let Some(p) = &config.embeddings.path {
        manifest.input(Path::new(p))?;
    }
    let outcome = train(&train_docs, &dev_docs, &provider, &config)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    outcome.checkpoint.save(out)?;
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        best_dev_avg_f1: outcome.best_dev_f1,
        history: &outcome.history,
    };
    let history_path = out.with_extension("history.json");
    write_file(&history_path, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    info!(best_epoch = outcome.best_epoch, best_dev_avg_f1 = outcome.best_dev_f1, out = %out.display(), "training finished");
    manifest.output(out)?;
    manifest.output(&history_path)?;
    manifest.finish(&manifest_path(cli, out))
}

/// Model and embeddings for a stored checkpoint with CLI overrides applied.
fn load_model(cli: &Cli, path: &Path, manifest_cmd: &str) -> Result<(CorefModel, EmbeddingProvider, RunManifest)> {
    let ckpt = Checkpoint::load(path)?;
    let mut config = resolve_config(cli, ckpt.config.clone())?;
    let provider = open_provider(&mut config)?;
    let params = ckpt.tensors.iter().map(|t| (t.name.clone(), t.value.clone())).collect();
    let model = CorefModel::with_parameters(config.model.clone(), params)?;
    let mut manifest = RunManifest::new(manifest_cmd, config.seed, cli.jobs, config.to_text());
    manifest.input(path)?;
    if let Some(p) = &config.embeddings.path {
        manifest.input(Path::new(p))?;
    }
    Ok((model, provider, manifest))
}

fn predict_all(model: &CorefModel, provider: &EmbeddingProvider, docs: &[Document], method: HoiMethod, jobs: usize) -> Result<Vec<Prediction>> {
    thread_pool(jobs)?.install(|| {
        docs.par_iter()
            .map(|doc| {
                let emb = provider.embed(doc)?;
                model.predict_with(doc, &emb, method)
            })
            .collect::<coref::Result<Vec<_>>>()
            .map_err(Into::into)
    })
}

fn predict(cli: &Cli, model_path: &Path, input: &Path, out: &Path, hoi: Option<HoiMethod>) -> Result<()> {
    let (model, provider, mut manifest) = load_model(cli, model_path, "predict")?;
    manifest.input(input)?;
    let docs = read_jsonlines(input)?;
    let method = hoi.unwrap_or(model.config.hoi.method);
    let preds = predict_all(&model, &provider, &docs, method, cli.jobs)?;
    write_file(out, &write_predictions(&preds))?;
    info!(documents = preds.len(), method = %method, out = %out.display(), "predictions written");
    manifest.output(out)?;
    manifest.finish(&manifest_path(cli, out))
}

#[derive(Deserialize)]
struct ClusterRecord {
    doc_key: String,
    clusters: Vec<Cluster>,
}

fn read_cluster_records(path: &Path) -> Result<HashMap<String, Vec<Cluster>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: ClusterRecord = serde_json::from_str(line)
            .map_err(|e| coref::Error::Format(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if out.insert(rec.doc_key.clone(), rec.clusters).is_some() {
            bail!(coref::Error::Format(format!("{} lists {} twice", path.display(), rec.doc_key)));
        }
    }
    Ok(out)
}

fn evaluate(cli: &Cli, gold_path: &Path, pred_path: &Path, report_path: &Path) -> Result<()> {
    let config = resolve_config(cli, TrainConfig::default())?;
    let mut manifest = RunManifest::new("evaluate", config.seed, cli.jobs, config.to_text());
    manifest.input(gold_path)?;
    manifest.input(pred_path)?;
    let gold = read_jsonlines(gold_path)?;
    let pred = read_cluster_records(pred_path)?;
    if let Some(extra) = pred.keys().filter(|k| !gold.iter().any(|d| &d.doc_key == *k)).min() {
        bail!(coref::Error::MissingDocument(format!("{extra} is predicted but not in the gold file")));
    }
    // Per-document counts are summed in gold order so the report does not
    // depend on the number of workers.
    let partial: Vec<Evaluator> = thread_pool(cli.jobs)?.install(|| {
        gold.par_iter()
            .map(|doc| {
                let clusters = pred.get(&doc.doc_key).ok_or_else(|| coref::Error::MissingDocument(doc.doc_key.clone()))?;
                let mut e = Evaluator::new();
                e.add(&doc.clusters, clusters);
                Ok(e)
            })
            .collect::<coref::Result<_>>()
    })?;
    let mut total = Evaluator::new();
    for e in &partial {
        total.merge(e);
    }
    let report: MetricsReport = total.report();
    write_file(report_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    info!(avg_f1 = report.avg_f1, report = %report_path.display(), "evaluation written");
    manifest.output(report_path)?;
    manifest.finish(&manifest_path(cli, report_path))
}

#[derive(Serialize)]
struct PronounPair {
    before: PronounReport,
    after: PronounReport,
}

#[derive(Serialize)]
struct AnalysisReport {
    link_change: coref::analysis::LinkChangeReport,
    pronouns: PronounPair,
}

/// The prediction as it stood before the higher-order step.
fn pre_hoi_view(p: &Prediction) -> Prediction {
    Prediction {
        clusters: decode_clusters(&p.spans, &p.pre_hoi_antecedents),
        antecedents: p.pre_hoi_antecedents.clone(),
        ..p.clone()
    }
}

fn analyze(cli: &Cli, before: &Path, after: Option<&Path>, gold_path: &Path, out: &Path, lexicon: Option<&Path>) -> Result<()> {
    let config = resolve_config(cli, TrainConfig::default())?;
    let mut manifest = RunManifest::new("analyze", config.seed, cli.jobs, config.to_text());
    manifest.input(before)?;
    manifest.input(gold_path)?;
    let gold = read_jsonlines(gold_path)?;
    let before_preds = read_predictions(before)?;
    let (before_view, after_view): (Vec<Prediction>, Vec<Prediction>) = match after {
        Some(path) => {
            manifest.input(path)?;
            (before_preds, read_predictions(path)?)
        }
        None => (before_preds.iter().map(pre_hoi_view).collect(), before_preds),
    };
    let lexicon = match lexicon {
        Some(path) => {
            manifest.input(path)?;
            PronounLexicon::load(path)?
        }
        None => PronounLexicon::default(),
    };
    let decisions = |preds: &[Prediction]| preds.iter().map(DecisionSet::final_decisions).collect::<Vec<_>>();
    let changes = link_change(&decisions(&before_view), &decisions(&after_view), &gold, config.include_nongold)?;
    let (pb, pa) = thread_pool(cli.jobs)?.install(|| {
        rayon::join(
            || pronoun_analysis(&before_view, &gold, &lexicon),
            || pronoun_analysis(&after_view, &gold, &lexicon),
        )
    });
    info!(w2c = changes.w2c, c2w = changes.c2w, "link changes counted");
    let report = AnalysisReport {
        link_change: changes,
        pronouns: PronounPair { before: pb?, after: pa? },
    };
    write_file(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    info!(out = %out.display(), "analysis written");
    manifest.output(out)?;
    manifest.finish(&manifest_path(cli, out))
}

fn hoi_off(cli: &Cli, model_path: &Path, input: &Path, report_path: &Path) -> Result<()> {
    let (model, provider, mut manifest) = load_model(cli, model_path, "hoi-off")?;
    manifest.input(input)?;
    let docs = read_jsonlines(input)?;
    let report = hoi_off_eval(&model, &docs, &provider)?;
    write_file(report_path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    info!(method = %report.method, drop = report.drop, report = %report_path.display(), "hoi-off report written");
    manifest.output(report_path)?;
    manifest.finish(&manifest_path(cli, report_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use coref::corpus::Span;

    #[test]
    fn usage_errors_exit_with_two() {
        let err: anyhow::Error = coref::Error::Config("bad".into()).into();
        assert_eq!(exit_code(&err), 2);
        let err: anyhow::Error = coref::Error::MissingDocument("nw/x_0".into()).into();
        assert_eq!(exit_code(&err), 1);
        let wrapped = anyhow::Error::from(coref::Error::Argument("x".into())).context("while parsing");
        assert_eq!(exit_code(&wrapped), 2);
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::parse_from(["coref", "--seed", "9", "--set", "epochs=3", "--embed-dim", "16", "evaluate", "--gold", "g", "--pred", "p", "--report", "r"]);
        let c = resolve_config(&cli, TrainConfig::default()).unwrap();
        assert_eq!((c.seed, c.epochs, c.model.emb_dim), (9, 3, 16));
    }

    #[test]
    fn pre_hoi_view_rebuilds_clusters() {
        let p = Prediction {
            doc_key: "nw/x_0".into(),
            clusters: vec![],
            spans: vec![Span::new(0, 0), Span::new(1, 1)],
            antecedents: vec![None, None],
            pre_hoi_antecedents: vec![None, Some(0)],
        };
        let v = pre_hoi_view(&p);
        assert_eq!(v.clusters, vec![vec![Span::new(0, 0), Span::new(1, 1)]]);
        assert_eq!(v.antecedents, p.pre_hoi_antecedents);
    }
}
