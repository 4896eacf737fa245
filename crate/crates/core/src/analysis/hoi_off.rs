use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::corpus::Document;
use crate::embedding::EmbeddingProvider;
use crate::error::Result;
use crate::hoi::HoiMethod;
use crate::metrics::{Evaluator, MetricsReport};
use crate::model::{CorefModel, Prediction};

/// Scores of one model with and without its higher-order step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoiOffReport {
    pub method: HoiMethod,
    pub with_hoi: MetricsReport,
    pub without_hoi: MetricsReport,
    /// `with_hoi.avg_f1 - without_hoi.avg_f1`; positive when HOI helps.
    pub drop: f64,
}

impl HoiOffReport {
    pub fn new(method: HoiMethod, with_hoi: MetricsReport, without_hoi: MetricsReport) -> Self {
        Self {
            method,
            drop: with_hoi.avg_f1 - without_hoi.avg_f1,
            with_hoi,
            without_hoi,
        }
    }
}

/// Predicts every document with `method` and scores against gold clusters.
pub fn evaluate_model(model: &CorefModel, docs: &[Document], provider: &EmbeddingProvider, method: HoiMethod) -> Result<(MetricsReport, Vec<Prediction>)> {
    let mut eval = Evaluator::new();
    let mut preds = Vec::with_capacity(docs.len());
    for doc in docs {
        let emb = provider.embed(doc)?;
        let p = model.predict_with(doc, &emb, method)?;
        eval.add(&doc.clusters, &p.clusters);
        preds.push(p);
    }
    Ok((eval.report(), preds))
}

/// Evaluates the same parameters with the configured method and with the
/// higher-order step switched off (refinement skipped, cluster term dropped).
pub fn hoi_off_eval(model: &CorefModel, docs: &[Document], provider: &EmbeddingProvider) -> Result<HoiOffReport> {
    let method = model.config.hoi.method;
    if method == HoiMethod::None {
        warn!("model has no higher-order step; turning it off changes nothing");
    }
    let (with_hoi, _) = evaluate_model(model, docs, provider, method)?;
    let (without_hoi, _) = evaluate_model(model, docs, provider, HoiMethod::None)?;
    Ok(HoiOffReport::new(method, with_hoi, without_hoi))
}
