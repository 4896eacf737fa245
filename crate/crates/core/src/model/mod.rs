//! The full coreference model: span encoding, pruning, scoring, and
//! higher-order inference, plus its training objective.

mod loss;
mod prediction;

pub use loss::{gold_mask, marginal_loss, mention_loss};
pub use prediction::{read_predictions, write_predictions, Prediction};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Cluster, Document, Span, DEFAULT_MAX_SEGMENT_LEN};
use crate::embedding::{SpanEncoder, TokenEmbeddings};
use crate::error::{Error, Result};
use crate::hoi::{self, ClusterMerger, HoiConfig, HoiMethod};
use crate::nn::{Ffnn, Gate, Matrix, ParamStore, Tape, Var};
use crate::ranker::{
    decode_clusters, enumerate_spans, prune_spans, select_candidates, AntecedentFrame, PairFeatures, PairScorer, SpanContext,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub emb_dim: usize,
    /// Width of every learned feature embedding.
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub max_span_width: usize,
    pub prune_ratio: f64,
    pub max_spans: usize,
    pub max_antecedents: usize,
    pub max_segment_len: usize,
    pub hoi: HoiConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            emb_dim: 64,
            feature_dim: 20,
            hidden: vec![1000, 1000],
            dropout: 0.3,
            max_span_width: 30,
            prune_ratio: 0.4,
            max_spans: 3900,
            max_antecedents: 50,
            max_segment_len: DEFAULT_MAX_SEGMENT_LEN,
            hoi: HoiConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.emb_dim == 0 || self.feature_dim == 0 {
            return bad("embedding and feature dimensions must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.max_span_width == 0 || self.max_spans == 0 || self.max_segment_len == 0 {
            return bad("span width, span cap, and segment length must be positive");
        }
        if !(self.prune_ratio > 0.0 && self.prune_ratio.is_finite()) {
            return bad("pruning ratio must be positive");
        }
        if self.hoi.method.refines() && self.hoi.rounds == 0 {
            return bad("hoi.rounds must be at least 1 for refinement methods");
        }
        if self.hoi.ee_max_spans == 0 {
            return bad("ee.max_spans must be positive");
        }
        Ok(())
    }
}

/// How a forward pass runs its higher-order step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardOptions {
    pub method: HoiMethod,
    /// Cut gradient flow at the refined span vectors (a probe for tests).
    pub detach_refinement: bool,
}

impl ForwardOptions {
    pub fn new(method: HoiMethod) -> Self {
        Self {
            method,
            detach_refinement: false,
        }
    }
}

/// One document's forward pass.
pub struct Forward {
    pub frame: AntecedentFrame,
    /// Scores before any higher-order step.
    pub base_scores: Var,
    /// Scores the decisions and the loss are taken from.
    pub scores: Var,
    pub pre_decisions: Vec<Option<usize>>,
    pub decisions: Vec<Option<usize>>,
}

impl Forward {
    pub fn clusters(&self) -> Vec<Cluster> {
        decode_clusters(&self.frame.spans, &self.decisions)
    }

    pub fn prediction(&self, doc_key: &str) -> Prediction {
        Prediction {
            doc_key: doc_key.to_string(),
            clusters: self.clusters(),
            spans: self.frame.spans.clone(),
            antecedents: self.decisions.clone(),
            pre_hoi_antecedents: self.pre_decisions.clone(),
        }
    }
}

/// Parameters and structure of the model. Every component is created
/// regardless of the configured method, in a fixed order, so a checkpoint
/// can be run with any method.
#[derive(Clone, Debug)]
pub struct CorefModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    encoder: SpanEncoder,
    scorer: PairScorer,
    gate: Gate,
    attention: Ffnn,
    merger: ClusterMerger,
}

impl CorefModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = SpanEncoder::new(&mut store, config.emb_dim, config.feature_dim, &mut rng);
        let d = encoder.output_dim();
        let scorer = PairScorer::new(&mut store, d, config.feature_dim, &config.hidden, &mut rng);
        let gate = Gate::new(&mut store, "gate", d, &mut rng);
        let attention = Ffnn::new(&mut store, "sc.attention", d, &config.hidden, 1, &mut rng);
        let merger = ClusterMerger::new(&mut store, d, config.feature_dim, &config.hidden, &mut rng);
        Ok(Self {
            config,
            store,
            encoder,
            scorer,
            gate,
            attention,
            merger,
        })
    }

    /// Rebuilds the model for `config` and installs stored parameter values,
    /// which must match by name and shape.
    pub fn with_parameters(config: ModelConfig, params: Vec<(String, Matrix)>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.store.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", model.store.len(), params.len())));
        }
        for (name, value) in params {
            let id = model
                .store
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {name}")))?;
            let slot = model.store.value_mut(id);
            if slot.dim() != value.dim() {
                return Err(Error::Checkpoint(format!("tensor {name} has shape {:?}, expected {:?}", value.dim(), slot.dim())));
            }
            *slot = value;
        }
        Ok(model)
    }

    pub fn span_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn gate(&self) -> &Gate {
        &self.gate
    }

    /// Saturates the refinement gate so refined vectors equal the originals.
    pub fn force_gate_open(&mut self) {
        self.gate.force_open(&mut self.store);
    }

    /// Zeroes the cluster-merging network so its score term vanishes.
    pub fn zero_cluster_network(&mut self) {
        for id in self.merger.net.params().collect::<Vec<_>>() {
            self.store.value_mut(id).fill(0.0);
        }
    }

    fn span_cap(&self, method: HoiMethod) -> usize {
        let ee = method == HoiMethod::Ee || self.config.hoi.method == HoiMethod::Ee;
        if ee {
            self.config.max_spans.min(self.config.hoi.ee_max_spans)
        } else {
            self.config.max_spans
        }
    }

    /// Mention logits for arbitrary spans, computed as in the main pass.
    pub fn mention_logits(&self, tape: &mut Tape, emb: &TokenEmbeddings, spans: &[Span]) -> Result<Var> {
        let tokens = tape.constant(emb.vectors.clone());
        let g = self.encoder.encode(tape, &self.store, tokens, spans)?;
        let g = tape.dropout(g);
        self.scorer.mention_scores(tape, &self.store, g)
    }

    /// Runs the model on one document with the configured method.
    pub fn forward(&self, tape: &mut Tape, doc: &Document, emb: &TokenEmbeddings) -> Result<Forward> {
        self.forward_with(tape, doc, emb, ForwardOptions::new(self.config.hoi.method))
    }

    pub fn forward_with(&self, tape: &mut Tape, doc: &Document, emb: &TokenEmbeddings, opts: ForwardOptions) -> Result<Forward> {
        emb.check_document(doc)?;
        if emb.dim() != self.config.emb_dim {
            return Err(Error::dim(format!("embeddings for {}", doc.doc_key), self.config.emb_dim, emb.dim()));
        }
        let store = &self.store;
        let candidates = enumerate_spans(doc, self.config.max_span_width);
        if candidates.is_empty() {
            let frame = AntecedentFrame::new(Vec::new(), Vec::new())?;
            let scores = tape.constant(Matrix::zeros((0, 1)));
            return Ok(Forward {
                frame,
                base_scores: scores,
                scores,
                pre_decisions: Vec::new(),
                decisions: Vec::new(),
            });
        }

        // Pruning uses dropout-free mention scores on a scratch tape.
        let mut scratch = Tape::new();
        let tokens = scratch.constant(emb.vectors.clone());
        let g_all = self.encoder.encode(&mut scratch, store, tokens, &candidates)?;
        let sm_all = self.scorer.mention_scores(&mut scratch, store, g_all)?;
        let mention_all: Vec<f64> = scratch.value(sm_all).column(0).to_vec();
        let kept = prune_spans(
            &candidates,
            &mention_all,
            self.config.prune_ratio,
            doc.num_tokens(),
            self.span_cap(opts.method),
        );
        let spans: Vec<_> = kept.iter().map(|&i| candidates[i]).collect();

        let tokens = tape.constant(emb.vectors.clone());
        let g = self.encoder.encode(tape, store, tokens, &spans)?;
        let g = tape.dropout(g);
        let sm = self.scorer.mention_scores(tape, store, g)?;
        let mention: Vec<f64> = tape.value(sm).column(0).to_vec();
        let coarse = self.scorer.coarse_scores(store, tape.value(g), &mention);
        let frame = AntecedentFrame::new(spans, select_candidates(&coarse, self.config.max_antecedents))?;
        let ctx = SpanContext::new(doc, &frame.spans, self.config.max_segment_len)?;
        let features = PairFeatures::new(&ctx, &frame.pairs());
        let base = self.scorer.frame_scores(tape, store, g, sm, &frame, &features)?;
        let pre_decisions = frame.decide(tape.value(base));

        let hoi_cfg = &self.config.hoi;
        let (scores, decisions) = match opts.method {
            HoiMethod::None => (base, pre_decisions.clone()),
            HoiMethod::Cm => {
                let out = self
                    .merger
                    .rank(tape, store, g, base, &frame, hoi_cfg.cm_order, hoi_cfg.cm_reduce, true)?;
                (out.scores, out.decisions)
            }
            method => {
                let mask = frame.mask();
                let mut current = g;
                let mut scores = base;
                for _ in 0..hoi_cfg.rounds.max(1) {
                    let probs = tape.masked_softmax(scores, &mask);
                    let refined = match method {
                        HoiMethod::Aa => hoi::attended_antecedent(tape, probs, current, &frame),
                        HoiMethod::Ee => {
                            let q = hoi::entity_membership(tape, probs, &frame);
                            hoi::entity_equalization(tape, q, current)
                        }
                        HoiMethod::Sc => {
                            let clusters = hoi::refinement_clusters(&frame.decide(tape.value(scores)));
                            hoi::span_clustering(tape, store, &self.attention, current, &clusters)?
                        }
                        HoiMethod::None | HoiMethod::Cm => unreachable!(),
                    };
                    let mut updated = self.gate.update(tape, store, current, refined)?;
                    if opts.detach_refinement {
                        updated = tape.detach(updated);
                    }
                    let sm = self.scorer.mention_scores(tape, store, updated)?;
                    scores = self.scorer.frame_scores(tape, store, updated, sm, &frame, &features)?;
                    current = updated;
                }
                let decisions = frame.decide(tape.value(scores));
                (scores, decisions)
            }
        };
        if let Some(op) = tape.non_finite_op() {
            return Err(Error::NonFinite(format!("{} produced a non-finite value in {}", op, doc.doc_key)));
        }
        Ok(Forward {
            frame,
            base_scores: base,
            scores,
            pre_decisions,
            decisions,
        })
    }

    /// Evaluation-mode prediction with `method` in place of the configured one.
    pub fn predict_with(&self, doc: &Document, emb: &TokenEmbeddings, method: HoiMethod) -> Result<Prediction> {
        let mut tape = Tape::new();
        let fwd = self.forward_with(&mut tape, doc, emb, ForwardOptions::new(method))?;
        Ok(fwd.prediction(&doc.doc_key))
    }

    pub fn predict(&self, doc: &Document, emb: &TokenEmbeddings) -> Result<Prediction> {
        self.predict_with(doc, emb, self.config.hoi.method)
    }
}
