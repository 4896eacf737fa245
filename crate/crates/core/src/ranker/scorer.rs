use rand_chacha::ChaCha8Rng;

use super::features::{MetaFeatures, PairFeatures};
use super::frame::AntecedentFrame;
use crate::error::{Error, Result};
use crate::nn::{Ffnn, Matrix, ParamId, ParamStore, Tape, Var};

/// Mention and antecedent scoring heads.
///
/// `s(x, y) = s_m(x) + s_m(y) + s_c(x, y)` where `s_c` is the pair network
/// over `[g_x; g_y; g_x * g_y; phi]` plus the bilinear coarse term
/// `g_x' W g_y`.
#[derive(Clone, Debug)]
pub struct PairScorer {
    pub mention: Ffnn,
    pub pair: Ffnn,
    pub coarse: ParamId,
    pub meta: MetaFeatures,
    span_dim: usize,
}

impl PairScorer {
    pub fn new(store: &mut ParamStore, span_dim: usize, feature_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mention = Ffnn::new(store, "mention", span_dim, hidden, 1, rng);
        let meta = MetaFeatures::new(store, feature_dim, rng);
        let pair = Ffnn::new(store, "pair", 3 * span_dim + meta.output_dim(), hidden, 1, rng);
        let coarse = store.glorot("coarse.weight", span_dim, span_dim, rng);
        Self {
            mention,
            pair,
            coarse,
            meta,
            span_dim,
        }
    }

    pub fn span_dim(&self) -> usize {
        self.span_dim
    }

    /// `k x 1` mention scores.
    pub fn mention_scores(&self, tape: &mut Tape, store: &ParamStore, g: Var) -> Result<Var> {
        self.mention.forward(tape, store, g)
    }

    /// `k x k` coarse scores from plain values; cells with `y >= x` are -inf.
    pub fn coarse_scores(&self, store: &ParamStore, g: &Matrix, mention: &[f64]) -> Matrix {
        let bilinear = g.dot(store.value(self.coarse)).dot(&g.t());
        Matrix::from_shape_fn(bilinear.dim(), |(x, y)| {
            if y < x {
                mention[x] + mention[y] + bilinear[[x, y]]
            } else {
                f64::NEG_INFINITY
            }
        })
    }

    /// `k x 1` column of pair scores `s(x, y)` in frame pair order.
    pub fn pair_scores(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        g: Var,
        mention: Var,
        frame: &AntecedentFrame,
        features: &PairFeatures,
    ) -> Result<Var> {
        let (k, d) = tape.value(g).dim();
        if d != self.span_dim {
            return Err(Error::dim("span vectors", self.span_dim, d));
        }
        if k != frame.len() || tape.value(mention).dim() != (k, 1) {
            return Err(Error::dim("spans in frame", frame.len(), k));
        }
        let pairs = frame.pairs();
        if features.len() != pairs.len() {
            return Err(Error::dim("pair features", pairs.len(), features.len()));
        }
        let xs: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let gx = tape.gather_rows(g, &xs);
        let gy = tape.gather_rows(g, &ys);
        let prod = tape.mul(gx, gy);
        let phi = self.meta.embed(tape, store, features);
        let input = tape.concat_cols(&[gx, gy, prod, phi]);
        let fine = self.pair.forward(tape, store, input)?;
        let w = tape.param(store, self.coarse);
        let gxw = tape.matmul(gx, w);
        let bilinear = tape.row_dot(gxw, gy);
        let smx = tape.gather_rows(mention, &xs);
        let smy = tape.gather_rows(mention, &ys);
        let s = tape.add(smx, smy);
        let s = tape.add(s, bilinear);
        Ok(tape.add(s, fine))
    }

    /// Full `k x width` score frame with the dummy column at 0.
    pub fn frame_scores(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        g: Var,
        mention: Var,
        frame: &AntecedentFrame,
        features: &PairFeatures,
    ) -> Result<Var> {
        let positions = frame.positions();
        if positions.is_empty() {
            return Ok(tape.constant(Matrix::zeros((frame.len(), frame.width()))));
        }
        let s = self.pair_scores(tape, store, g, mention, frame, features)?;
        Ok(tape.scatter_frame(s, frame.len(), frame.width(), &positions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Span;
    use crate::ranker::features::SpanContext;
    use rand::{Rng, SeedableRng};

    fn setup(k: usize, seed: u64) -> (ParamStore, PairScorer, Matrix, AntecedentFrame, PairFeatures) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let scorer = PairScorer::new(&mut store, 6, 3, &[5], &mut rng);
        let g = Matrix::from_shape_fn((k, 6), |_| rng.random_range(-1.0..1.0));
        let spans: Vec<Span> = (0..k).map(|i| Span::new(i, i)).collect();
        let frame = AntecedentFrame::all_preceding(spans, 3);
        let ctx = SpanContext {
            speaker: (0..k).map(|i| (i % 2).to_string()).collect(),
            segment: (0..k).map(|i| i / 2).collect(),
            genre: 1,
        };
        let features = PairFeatures::new(&ctx, &frame.pairs());
        (store, scorer, g, frame, features)
    }

    #[test]
    fn zero_weights_give_uniform_distribution() {
        let (mut store, scorer, g, frame, features) = setup(4, 1);
        store.zero_all();
        let mut tape = Tape::new();
        let gv = tape.constant(g);
        let sm = scorer.mention_scores(&mut tape, &store, gv).unwrap();
        let s = scorer.frame_scores(&mut tape, &store, gv, sm, &frame, &features).unwrap();
        assert!(tape.value(s).iter().all(|&v| v == 0.0));
        assert_eq!(frame.decide(tape.value(s)), vec![None; 4]);
        let p = frame.distribution(tape.value(s));
        assert!((p[[3, 1]] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn score_is_sum_of_components() {
        let (store, scorer, g, frame, features) = setup(5, 2);
        let mut tape = Tape::new();
        let gv = tape.constant(g.clone());
        let sm = scorer.mention_scores(&mut tape, &store, gv).unwrap();
        let s = scorer.frame_scores(&mut tape, &store, gv, sm, &frame, &features).unwrap();
        let sm = tape.value(sm).clone();
        let w = store.value(scorer.coarse);
        for (i, ((x, y), (r, c))) in frame.pairs().into_iter().zip(frame.positions()).enumerate() {
            // Independent route: the pair network on a single row.
            let mut t = Tape::new();
            let gx = g.row(x).insert_axis(ndarray::Axis(0)).to_owned();
            let gy = g.row(y).insert_axis(ndarray::Axis(0)).to_owned();
            let prod = &gx * &gy;
            let one = PairFeatures {
                same_speaker: vec![features.same_speaker[i]],
                distance: vec![features.distance[i]],
                genre: vec![features.genre[i]],
                segment_distance: vec![features.segment_distance[i]],
            };
            let phi = scorer.meta.embed(&mut t, &store, &one);
            let parts = [t.constant(gx.clone()), t.constant(gy.clone()), t.constant(prod)];
            let input = t.concat_cols(&[parts[0], parts[1], parts[2], phi]);
            let fine = scorer.pair.forward(&mut t, &store, input).unwrap();
            let bilinear = gx.dot(w).dot(&gy.t())[[0, 0]];
            let expected = sm[[x, 0]] + sm[[y, 0]] + bilinear + t.scalar(fine);
            assert!((tape.value(s)[[r, c]] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_matches_value_route() {
        let (store, scorer, g, _, _) = setup(4, 3);
        let sm = vec![0.1, -0.2, 0.3, 0.0];
        let c = scorer.coarse_scores(&store, &g, &sm);
        let w = store.value(scorer.coarse);
        assert_eq!(c[[1, 1]], f64::NEG_INFINITY);
        let direct = sm[3] + sm[1] + g.row(3).dot(&w.dot(&g.row(1)));
        assert!((c[[3, 1]] - direct).abs() < 1e-12);
    }
}
