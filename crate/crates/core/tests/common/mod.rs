#![allow(dead_code)]

use coref::corpus::{Cluster, Document, Span};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const VOCAB: &[&str] = &[
    "the", "a", "cat", "dog", "she", "he", "it", "they", "saw", "said", "city", "report", "that", "her", "his", "we", "you", "of",
    "in", "mayor", "council", "plan", ".", ",",
];

pub const GENRES: &[&str] = &["bc", "bn", "mz", "nw", "pt", "tc", "wb"];

pub fn toy_corpus() -> Vec<Document> {
    coref::corpus::from_jsonlines(include_str!("../../data/toy.jsonlines")).expect("bundled toy corpus parses")
}

/// A random document whose mentions stay inside sentences and never cross.
pub fn random_document(rng: &mut ChaCha8Rng, key: &str, max_sentences: usize, max_len: usize, max_clusters: usize) -> Document {
    let genre = GENRES[rng.random_range(0..GENRES.len())];
    let sentences: Vec<Vec<String>> = (0..rng.random_range(1..=max_sentences))
        .map(|_| {
            (0..rng.random_range(1..=max_len))
                .map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_string())
                .collect()
        })
        .collect();
    let mut doc = Document::new(format!("{genre}/{key}_0"), sentences);
    let speakers = ["spk_A", "spk_B", "spk_C"];
    let mut t = 0;
    for s in &doc.sentences {
        let who = speakers[rng.random_range(0..speakers.len())];
        for _ in s {
            doc.speakers[t] = who.to_string();
            t += 1;
        }
    }
    let mut candidates = Vec::new();
    for sent in doc.sentence_spans() {
        for start in sent.start..=sent.end {
            for end in start..=(start + 2).min(sent.end) {
                candidates.push(Span::new(start, end));
            }
        }
    }
    candidates.shuffle(rng);
    let mut mentions: Vec<Span> = Vec::new();
    let wanted = rng.random_range(0..=2 * max_clusters + 2);
    for c in candidates {
        if mentions.len() >= wanted {
            break;
        }
        if mentions.iter().all(|m| !m.crosses(&c)) {
            mentions.push(c);
        }
    }
    let k = rng.random_range(1..=max_clusters.max(1));
    let mut clusters: Vec<Cluster> = vec![Vec::new(); k];
    for m in mentions {
        clusters[rng.random_range(0..k)].push(m);
    }
    clusters.retain(|c| c.len() > 1);
    doc.clusters = clusters;
    doc.canonicalize();
    doc
}

/// A random partition of a random subset of `mentions`.
pub fn random_partition(rng: &mut ChaCha8Rng, mentions: &[Span], max_clusters: usize) -> Vec<Cluster> {
    let k = rng.random_range(1..=max_clusters);
    let mut clusters: Vec<Cluster> = vec![Vec::new(); k];
    for &m in mentions {
        if rng.random_bool(0.85) {
            clusters[rng.random_range(0..k)].push(m);
        }
    }
    clusters.retain(|c| !c.is_empty());
    clusters
}

/// One `PASS`/`FAIL` line per acceptance criterion.
pub fn verdict(name: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
