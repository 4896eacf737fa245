use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use crate::analysis::evaluate_model;
use crate::corpus::{Document, Span};
use crate::embedding::{EmbeddingProvider, TokenEmbeddings};
use crate::error::{Error, Result};
use crate::model::{marginal_loss, mention_loss, CorefModel, Forward, ForwardOptions};
use crate::nn::{clip_global_norm, Adam, Tape, Var};

/// Loss of one document under `opts`: the marginal antecedent likelihood,
/// plus `mention_coef` times a mention-detection term over the kept spans and
/// the gold mentions.
pub fn document_loss(
    model: &CorefModel,
    tape: &mut Tape,
    doc: &Document,
    emb: &TokenEmbeddings,
    opts: ForwardOptions,
    mention_coef: f64,
) -> Result<(Var, Forward)> {
    let fwd = model.forward_with(tape, doc, emb, opts)?;
    let mut loss = marginal_loss(tape, &fwd.frame, fwd.scores, doc);
    if mention_coef > 0.0 {
        let gold = doc.mention_to_cluster();
        let mut spans: Vec<Span> = fwd.frame.spans.iter().chain(gold.keys()).copied().collect();
        spans.sort_unstable();
        spans.dedup();
        if !spans.is_empty() {
            let logits = model.mention_logits(tape, emb, &spans)?;
            let labels: Vec<bool> = spans.iter().map(|s| gold.contains_key(s)).collect();
            let detect = mention_loss(tape, logits, &labels);
            let detect = tape.scale(detect, mention_coef);
            loss = tape.add(loss, detect);
        }
    }
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss of {}", doc.doc_key)));
    }
    Ok((loss, fwd))
}

/// Dropout stream of one update, derived from the run seed alone.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step + 1);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_avg_f1: f64,
    pub seconds: f64,
}

pub struct TrainOutcome {
    /// The best model on the dev documents.
    pub model: CorefModel,
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
}

/// Trains one document per update, keeping the parameters with the best dev
/// Avg-F1. Without dev documents the training documents are used.
pub fn train(train_docs: &[Document], dev_docs: &[Document], provider: &EmbeddingProvider, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut model = CorefModel::new(config.model.clone(), config.seed)?;
    if config.gate_init_open {
        model.force_gate_open();
    }
    let dev_docs = if dev_docs.is_empty() { train_docs } else { dev_docs };
    let embeddings: Vec<TokenEmbeddings> = train_docs.iter().map(|d| provider.embed(d)).collect::<Result<_>>()?;
    let mut adam_config = config.optimizer;
    adam_config.total_steps = (config.epochs * train_docs.len()).max(1) as u64;
    let mut adam = Adam::new(&model.store);
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let method = config.model.hoi.method;

    let mut best = Checkpoint::capture(&model, Some(&adam), config, 0);
    let mut best_epoch = 0;
    let mut best_f1 = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut total_loss = 0.0;
        for &i in &order {
            let (doc, emb) = (&train_docs[i], &embeddings[i]);
            let mut tape = Tape::training(config.model.dropout, step_rng(config.seed, adam.steps_taken()));
            let (loss, _) = document_loss(&model, &mut tape, doc, emb, ForwardOptions::new(method), config.mention_loss_coef)?;
            total_loss += tape.scalar(loss);
            let mut grads = tape.backward(loss).into_params();
            if grads.values().any(|g| !g.iter().all(|x| x.is_finite())) {
                return Err(Error::NonFinite(format!("gradient of {}", doc.doc_key)));
            }
            clip_global_norm(&mut grads, config.clip_norm);
            adam.step(&mut model.store, &grads, &adam_config)?;
        }
        let (report, _) = evaluate_model(&model, dev_docs, provider, method)?;
        let log = EpochLog {
            epoch,
            mean_loss: total_loss / train_docs.len().max(1) as f64,
            dev_avg_f1: report.avg_f1,
            seconds: started.elapsed().as_secs_f64(),
        };
        info!(epoch, loss = log.mean_loss, dev_avg_f1 = log.dev_avg_f1, seconds = log.seconds, "epoch finished");
        history.push(log);
        if report.avg_f1 > best_f1 {
            best_f1 = report.avg_f1;
            best_epoch = epoch;
            best = Checkpoint::capture(&model, Some(&adam), config, epoch as u64);
        }
        if config.early_stop_f1.is_some_and(|t| report.avg_f1 >= t) {
            info!(epoch, dev_avg_f1 = report.avg_f1, "early stop threshold reached");
            break;
        }
    }
    let model = best.model()?;
    Ok(TrainOutcome {
        model,
        checkpoint: best,
        history,
        best_epoch,
        best_dev_f1: best_f1,
    })
}

/// Mean and sample standard deviation of per-run dev Avg-F1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub scores: Vec<f64>,
    pub mean: f64,
    pub stdev: f64,
}

impl RunStats {
    /// The deviation uses the `n - 1` denominator and is 0 for a single run.
    /// Identical scores give exactly their value and a deviation of 0.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len();
        if n > 0 && scores.iter().all(|&s| s == scores[0]) {
            return Self { mean: scores[0], stdev: 0.0, scores };
        }
        let mean = if n == 0 { 0.0 } else { scores.iter().sum::<f64>() / n as f64 };
        let stdev = if n < 2 {
            0.0
        } else {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { scores, mean, stdev }
    }
}

/// Trains `k` times with seeds `seed, seed + 1, ...`.
pub fn repeat_runs(train_docs: &[Document], dev_docs: &[Document], provider: &EmbeddingProvider, config: &TrainConfig, k: usize) -> Result<RunStats> {
    let mut scores = Vec::with_capacity(k);
    for i in 0..k {
        let mut c = config.clone();
        c.seed = config.seed.wrapping_add(i as u64);
        let out = train(train_docs, dev_docs, provider, &c)?;
        scores.push(out.best_dev_f1);
    }
    Ok(RunStats::from_scores(scores))
}
