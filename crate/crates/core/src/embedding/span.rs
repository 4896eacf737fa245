use rand_chacha::ChaCha8Rng;

use super::provider::TokenEmbeddings;
use crate::corpus::Span;
use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore, Tape, Var};

/// Number of buckets for widths and distances:
/// `1, 2, 3, 4, 5-7, 8-15, 16-31, 32-63, 64+`.
pub const NUM_BUCKETS: usize = 9;

/// Bucket index for a positive width or distance; 0 maps to the first bucket.
pub fn bucket(d: usize) -> usize {
    match d {
        0..=4 => d.saturating_sub(1),
        _ => ((usize::BITS - d.leading_zeros()) as usize + 1).min(NUM_BUCKETS - 1),
    }
}

/// Span vector `g = [x_start; x_end; attended head; width embedding]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanRepr {
    pub span: Span,
    pub g: Vec<f64>,
    pub width_bucket: usize,
}

/// Learned parameters of the span composition.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanEncoder {
    emb_dim: usize,
    feature_dim: usize,
    head_weight: ParamId,
    head_bias: ParamId,
    width_table: ParamId,
}

impl SpanEncoder {
    pub fn new(store: &mut ParamStore, emb_dim: usize, feature_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let head_weight = store.glorot("span.head.weight", emb_dim, 1, rng);
        let head_bias = store.zeros("span.head.bias", 1, 1);
        let width_table = store.glorot("span.width", NUM_BUCKETS, feature_dim, rng);
        Self {
            emb_dim,
            feature_dim,
            head_weight,
            head_bias,
            width_table,
        }
    }

    pub fn emb_dim(&self) -> usize {
        self.emb_dim
    }

    pub fn output_dim(&self) -> usize {
        3 * self.emb_dim + self.feature_dim
    }

    pub fn head_weight(&self) -> ParamId {
        self.head_weight
    }

    /// Rows of span vectors for `spans` over the token matrix `tokens`.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, tokens: Var, spans: &[Span]) -> Result<Var> {
        let (n, d) = tape.value(tokens).dim();
        if d != self.emb_dim {
            return Err(Error::dim("token embeddings", self.emb_dim, d));
        }
        if let Some(bad) = spans.iter().find(|s| s.end >= n || s.start > s.end) {
            return Err(Error::Argument(format!("span {bad} out of range for {n} tokens")));
        }
        let w = tape.param(store, self.head_weight);
        let b = tape.param(store, self.head_bias);
        let logits = tape.matmul(tokens, w);
        let logits = tape.add_row(logits, b);
        let groups: Vec<Vec<usize>> = spans.iter().map(|s| (s.start..=s.end).collect()).collect();
        let head = tape.group_pool(logits, tokens, &groups);
        let starts: Vec<usize> = spans.iter().map(|s| s.start).collect();
        let ends: Vec<usize> = spans.iter().map(|s| s.end).collect();
        let widths: Vec<usize> = spans.iter().map(|s| bucket(s.width())).collect();
        let start_vecs = tape.gather_rows(tokens, &starts);
        let end_vecs = tape.gather_rows(tokens, &ends);
        let table = tape.param(store, self.width_table);
        let width_vecs = tape.gather_rows(table, &widths);
        Ok(tape.concat_cols(&[start_vecs, end_vecs, head, width_vecs]))
    }

    /// Softmax head-attention weights over the tokens of `span`.
    pub fn head_attention(&self, store: &ParamStore, emb: &TokenEmbeddings, span: Span) -> Result<Vec<f64>> {
        check_span(emb, span)?;
        let w = store.value(self.head_weight).column(0);
        let b = store.value(self.head_bias)[[0, 0]];
        let logits: Vec<f64> = (span.start..=span.end).map(|t| emb.vectors.row(t).dot(&w) + b).collect();
        crate::nn::softmax(&logits, &vec![true; logits.len()])
    }
}

fn check_span(emb: &TokenEmbeddings, span: Span) -> Result<()> {
    if span.start > span.end || span.end >= emb.len() {
        return Err(Error::Argument(format!("span {span} out of range for {} tokens", emb.len())));
    }
    Ok(())
}

/// Direct (tape-free) composition of one span vector.
pub fn build_span_repr(emb: &TokenEmbeddings, span: Span, encoder: &SpanEncoder, store: &ParamStore) -> Result<SpanRepr> {
    if emb.dim() != encoder.emb_dim {
        return Err(Error::dim("token embeddings", encoder.emb_dim, emb.dim()));
    }
    let weights = encoder.head_attention(store, emb, span)?;
    let mut head = vec![0.0; emb.dim()];
    for (t, w) in (span.start..=span.end).zip(&weights) {
        for (h, x) in head.iter_mut().zip(emb.vectors.row(t)) {
            *h += w * x;
        }
    }
    let width_bucket = bucket(span.width());
    let mut g = Vec::with_capacity(encoder.output_dim());
    g.extend(emb.vectors.row(span.start).iter());
    g.extend(emb.vectors.row(span.end).iter());
    g.extend(head);
    g.extend(store.value(encoder.width_table).row(width_bucket).iter());
    Ok(SpanRepr { span, g, width_bucket })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;
    use rand::{Rng, SeedableRng};

    fn setup(n: usize, d: usize, seed: u64) -> (ParamStore, SpanEncoder, TokenEmbeddings) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc = SpanEncoder::new(&mut store, d, 4, &mut rng);
        let m = Matrix::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
        (store, enc, TokenEmbeddings::new("d", m).unwrap())
    }

    #[test]
    fn buckets() {
        let expected = [(1, 0), (2, 1), (3, 2), (4, 3), (5, 4), (7, 4), (8, 5), (15, 5), (16, 6), (31, 6), (32, 7), (63, 7), (64, 8), (1000, 8)];
        for (d, b) in expected {
            assert_eq!(bucket(d), b, "distance {d}");
        }
    }

    #[test]
    fn unit_span_repeats_the_token() {
        let (store, enc, emb) = setup(5, 3, 0);
        let r = build_span_repr(&emb, Span::new(2, 2), &enc, &store).unwrap();
        let tok = emb.vectors.row(2).to_vec();
        assert_eq!(&r.g[0..3], tok.as_slice());
        assert_eq!(&r.g[3..6], tok.as_slice());
        assert_eq!(&r.g[6..9], tok.as_slice());
        assert_eq!(r.g.len(), enc.output_dim());
        assert_eq!(r.width_bucket, 0);
    }

    #[test]
    fn equal_head_scores_give_the_mean() {
        let (mut store, enc, emb) = setup(4, 3, 1);
        store.value_mut(enc.head_weight).fill(0.0);
        let r = build_span_repr(&emb, Span::new(1, 2), &enc, &store).unwrap();
        for i in 0..3 {
            let mean = 0.5 * (emb.vectors[[1, i]] + emb.vectors[[2, i]]);
            assert!((r.g[6 + i] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_sums_to_one_on_random_spans() {
        let (store, enc, emb) = setup(40, 5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = rng.random_range(0..40);
            let b = rng.random_range(a..40.min(a + 12));
            let w = enc.head_attention(&store, &emb, Span::new(a, b)).unwrap();
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn tape_route_matches_direct_route() {
        let (store, enc, emb) = setup(12, 4, 4);
        let spans = [Span::new(0, 0), Span::new(3, 7), Span::new(10, 11)];
        let mut tape = Tape::new();
        let tokens = tape.constant(emb.vectors.clone());
        let g = enc.encode(&mut tape, &store, tokens, &spans).unwrap();
        for (i, s) in spans.iter().enumerate() {
            let direct = build_span_repr(&emb, *s, &enc, &store).unwrap();
            for (a, b) in tape.value(g).row(i).iter().zip(&direct.g) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_range_span_is_rejected() {
        let (store, enc, emb) = setup(3, 2, 5);
        assert!(build_span_repr(&emb, Span::new(1, 3), &enc, &store).is_err());
        let mut tape = Tape::new();
        let tokens = tape.constant(emb.vectors.clone());
        assert!(enc.encode(&mut tape, &store, tokens, &[Span::new(2, 5)]).is_err());
    }
}
