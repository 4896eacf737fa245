use crate::corpus::{Document, Span};

/// Candidate spans in document order with their mention scores.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpanCandidateSet {
    pub spans: Vec<Span>,
    pub scores: Vec<f64>,
}

impl SpanCandidateSet {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn select(&self, keep: &[usize]) -> Self {
        Self {
            spans: keep.iter().map(|&i| self.spans[i]).collect(),
            scores: keep.iter().map(|&i| self.scores[i]).collect(),
        }
    }
}

/// All spans of at most `max_width` tokens that stay inside one sentence,
/// ordered by start, then end.
pub fn enumerate_spans(doc: &Document, max_width: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    for sentence in doc.sentence_spans() {
        for start in sentence.start..=sentence.end {
            let last = sentence.end.min(start + max_width.max(1) - 1);
            spans.extend((start..=last).map(|end| Span::new(start, end)));
        }
    }
    spans
}

/// Number of spans to keep: `min(ceil(ratio * n_tokens), cap)`.
pub fn prune_budget(ratio: f64, n_tokens: usize, cap: usize) -> usize {
    ((ratio * n_tokens as f64).ceil() as usize).min(cap)
}

/// Indices of the spans kept by score-ordered, non-crossing selection, in
/// document order.
///
/// Spans are visited by descending score (ties by position); a span is
/// accepted unless it partially overlaps an accepted span.
pub fn prune_spans(spans: &[Span], scores: &[f64], ratio: f64, n_tokens: usize, cap: usize) -> Vec<usize> {
    assert_eq!(spans.len(), scores.len());
    let budget = prune_budget(ratio, n_tokens, cap);
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::with_capacity(budget);
    for i in order {
        if kept.len() >= budget {
            break;
        }
        if kept.iter().all(|&k| !spans[k].crosses(&spans[i])) {
            kept.push(i);
        }
    }
    kept.sort_by_key(|&i| spans[i]);
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn doc(lengths: &[usize]) -> Document {
        Document::new("nw/t_0", lengths.iter().map(|&n| vec!["w".to_string(); n]).collect())
    }

    #[test]
    fn three_tokens_width_two() {
        let spans = enumerate_spans(&doc(&[3]), 2);
        let mut expected = vec![Span::new(0, 0), Span::new(1, 1), Span::new(2, 2), Span::new(0, 1), Span::new(1, 2)];
        expected.sort();
        assert_eq!(spans, expected);
    }

    #[test]
    fn spans_stay_inside_sentences() {
        let spans = enumerate_spans(&doc(&[2, 2]), 2);
        assert!(!spans.contains(&Span::new(1, 2)));
        assert_eq!(spans.len(), 6);
    }

    #[test]
    fn count_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let lengths: Vec<usize> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..20)).collect();
            let w = rng.random_range(1..12);
            let expected: usize = lengths
                .iter()
                .map(|&len| (1..=w.min(len)).map(|k| len - k + 1).sum::<usize>())
                .sum();
            let spans = enumerate_spans(&doc(&lengths), w);
            assert_eq!(spans.len(), expected);
            assert!(spans.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn large_ratio_only_removes_crossings() {
        let spans = vec![Span::new(0, 0), Span::new(0, 2), Span::new(1, 3), Span::new(2, 2)];
        let scores = vec![0.0, 5.0, 1.0, 0.5];
        let kept = prune_spans(&spans, &scores, 10.0, 4, 100);
        assert_eq!(kept, vec![0, 1, 3]);
    }

    #[test]
    fn crossing_span_rejected_below_its_rival() {
        let spans = vec![Span::new(0, 2), Span::new(1, 3)];
        let kept = prune_spans(&spans, &[2.0, 1.0], 1.0, 4, 10);
        assert_eq!(kept, vec![0]);
        let kept = prune_spans(&spans, &[1.0, 2.0], 1.0, 4, 10);
        assert_eq!(kept, vec![1]);
    }

    #[test]
    fn kept_count_matches_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let lengths: Vec<usize> = (0..rng.random_range(1..5)).map(|_| rng.random_range(1..15)).collect();
            let d = doc(&lengths);
            let spans = enumerate_spans(&d, 4);
            let scores: Vec<f64> = spans.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let cap = rng.random_range(1..40);
            let kept = prune_spans(&spans, &scores, 0.4, d.num_tokens(), cap);
            // Unit spans never cross, so there are always enough non-crossing spans.
            let budget = ((0.4 * d.num_tokens() as f64).ceil() as usize).min(cap);
            assert_eq!(kept.len(), budget);
            for (i, &a) in kept.iter().enumerate() {
                for &b in &kept[i + 1..] {
                    assert!(!spans[a].crosses(&spans[b]));
                }
            }
        }
    }
}
