mod common;

use coref::embedding::EmbeddingProvider;
use coref::hoi::HoiMethod;
use coref::model::CorefModel;
use coref::trainer::{train, TrainConfig};
use common::toy_corpus;

fn small(method: HoiMethod, epochs: usize) -> TrainConfig {
    let mut c = TrainConfig {
        epochs,
        ..Default::default()
    };
    c.model.hidden = vec![32];
    c.model.feature_dim = 8;
    c.model.hoi.method = method;
    c
}

fn same_parameters(a: &CorefModel, b: &CorefModel) -> bool {
    a.store.len() == b.store.len() && a.store.iter().zip(b.store.iter()).all(|((_, p), (_, q))| p.name == q.name && p.value == q.value)
}

#[test]
fn zero_epochs_return_the_initial_model() {
    let docs = toy_corpus();
    let provider = EmbeddingProvider::Hash { dim: 64, seed: 0 };
    let config = small(HoiMethod::Cm, 0);
    let out = train(&docs, &docs, &provider, &config).unwrap();
    let fresh = CorefModel::new(config.model.clone(), config.seed).unwrap();
    assert!(out.history.is_empty());
    assert!(same_parameters(&out.model, &fresh));
}

#[test]
fn training_loss_falls() {
    let docs = toy_corpus();
    let provider = EmbeddingProvider::Hash { dim: 64, seed: 0 };
    for method in [HoiMethod::None, HoiMethod::Sc] {
        let out = train(&docs, &docs, &provider, &small(method, 12)).unwrap();
        let loss: Vec<f64> = out.history.iter().map(|h| h.mean_loss).collect();
        let head = (loss[0] + loss[1] + loss[2]) / 3.0;
        let tail = (loss[9] + loss[10] + loss[11]) / 3.0;
        assert!(tail < head, "{method}: {loss:?}");
    }
}

#[test]
fn the_best_epoch_is_the_returned_model() {
    let docs = toy_corpus();
    let provider = EmbeddingProvider::Hash { dim: 64, seed: 0 };
    let out = train(&docs, &docs, &provider, &small(HoiMethod::Aa, 4)).unwrap();
    let best = out.history.iter().map(|h| h.dev_avg_f1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_dev_f1, best);
    assert_eq!(out.history[out.best_epoch - 1].dev_avg_f1, best);
    assert!(same_parameters(&out.model, &out.checkpoint.model().unwrap()));
}
