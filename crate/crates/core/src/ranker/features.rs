use rand_chacha::ChaCha8Rng;

use crate::corpus::{segment_document, token_segments, Document, Span};
use crate::embedding::{bucket, NUM_BUCKETS};
use crate::error::Result;
use crate::nn::{ParamId, ParamStore, Tape, Var};

/// Genre tags of the CoNLL-2012 English data; anything else shares one row.
pub const GENRES: [&str; 7] = ["bc", "bn", "mz", "nw", "pt", "tc", "wb"];

pub const MAX_SEGMENT_DISTANCE: usize = 8;

pub fn genre_id(genre: &str) -> usize {
    GENRES.iter().position(|&g| g == genre).unwrap_or(GENRES.len())
}

/// Per-span facts the pair features are computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanContext {
    pub speaker: Vec<String>,
    pub segment: Vec<usize>,
    pub genre: usize,
}

impl SpanContext {
    /// Speaker and segment of each span are those of its first token.
    /// Documents without stored segments are segmented with `max_segment_len`.
    pub fn new(doc: &Document, spans: &[Span], max_segment_len: usize) -> Result<Self> {
        let n = doc.num_tokens();
        let segments = match &doc.segments {
            Some(s) => s.clone(),
            None => segment_document(doc, max_segment_len)?.into_iter().map(|s| s.range).collect(),
        };
        let seg_of = token_segments(&segments, n);
        Ok(Self {
            speaker: spans.iter().map(|s| doc.speakers[s.start].clone()).collect(),
            segment: spans.iter().map(|s| seg_of[s.start]).collect(),
            genre: genre_id(&doc.genre),
        })
    }
}

/// Table rows selected for each (anaphor, antecedent) pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairFeatures {
    pub same_speaker: Vec<usize>,
    pub distance: Vec<usize>,
    pub genre: Vec<usize>,
    pub segment_distance: Vec<usize>,
}

impl PairFeatures {
    /// `pairs` holds `(x, y)` span indices with `y < x`.
    pub fn new(ctx: &SpanContext, pairs: &[(usize, usize)]) -> Self {
        let mut f = Self::default();
        for &(x, y) in pairs {
            debug_assert!(y < x);
            f.same_speaker.push(usize::from(ctx.speaker[x] == ctx.speaker[y]));
            f.distance.push(bucket(x - y));
            f.genre.push(ctx.genre);
            let seg = ctx.segment[x].saturating_sub(ctx.segment[y]);
            f.segment_distance.push(seg.min(MAX_SEGMENT_DISTANCE));
        }
        f
    }

    pub fn len(&self) -> usize {
        self.distance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distance.is_empty()
    }
}

/// Learned embeddings of the pair meta-information.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaFeatures {
    feature_dim: usize,
    speaker: ParamId,
    distance: ParamId,
    genre: ParamId,
    segment: ParamId,
}

impl MetaFeatures {
    pub fn new(store: &mut ParamStore, feature_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            feature_dim,
            speaker: store.glorot("meta.speaker", 2, feature_dim, rng),
            distance: store.glorot("meta.distance", NUM_BUCKETS, feature_dim, rng),
            genre: store.glorot("meta.genre", GENRES.len() + 1, feature_dim, rng),
            segment: store.glorot("meta.segment", MAX_SEGMENT_DISTANCE + 1, feature_dim, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        4 * self.feature_dim
    }

    /// One row of `[speaker; distance; genre; segment]` per pair, with dropout.
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, features: &PairFeatures) -> Var {
        let parts: Vec<Var> = [
            (self.speaker, &features.same_speaker),
            (self.distance, &features.distance),
            (self.genre, &features.genre),
            (self.segment, &features.segment_distance),
        ]
        .into_iter()
        .map(|(table, rows)| {
            let t = tape.param(store, table);
            tape.gather_rows(t, rows)
        })
        .collect();
        let phi = tape.concat_cols(&parts);
        tape.dropout(phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_rows_follow_context() {
        let ctx = SpanContext {
            speaker: vec!["a".into(), "a".into(), "b".into()],
            segment: vec![0, 0, 11],
            genre: genre_id("nw"),
        };
        let f = PairFeatures::new(&ctx, &[(1, 0), (2, 0)]);
        assert_eq!(f.same_speaker, vec![1, 0]);
        assert_eq!(f.distance, vec![0, 1]);
        assert_eq!(f.genre, vec![3, 3]);
        assert_eq!(f.segment_distance, vec![0, 8]);
        assert_eq!(genre_id("zz"), 7);
    }
}
