use serde::{Deserialize, Serialize};
use tracing::warn;

use super::document::{Document, Span};
use crate::error::{Error, Result};

/// Default segment length in tokens.
pub const DEFAULT_MAX_SEGMENT_LEN: usize = 384;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub doc_key: String,
    /// Inclusive token range.
    pub range: Span,
    pub max_len: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.range.width()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Longer than `max_len`: a single sentence that did not fit.
    pub fn is_overflow(&self) -> bool {
        self.len() > self.max_len
    }
}

/// Packs whole sentences greedily into segments of at most `max_len` tokens.
///
/// A sentence longer than `max_len` becomes its own overflow segment.
pub fn segment_document(doc: &Document, max_len: usize) -> Result<Vec<Segment>> {
    if max_len == 0 {
        return Err(Error::Argument("max segment length must be positive".into()));
    }
    let mut segments = Vec::new();
    let mut current: Option<Span> = None;
    let mut push = |range: Span| {
        segments.push(Segment {
            doc_key: doc.doc_key.clone(),
            range,
            max_len,
        })
    };
    for sentence in doc.sentence_spans() {
        if sentence.width() > max_len {
            if let Some(c) = current.take() {
                push(c);
            }
            warn!(doc_key = %doc.doc_key, len = sentence.width(), max_len, "sentence longer than segment limit kept whole");
            push(sentence);
            continue;
        }
        current = match current {
            Some(c) if c.width() + sentence.width() <= max_len => Some(Span::new(c.start, sentence.end)),
            Some(c) => {
                push(c);
                Some(sentence)
            }
            None => Some(sentence),
        };
    }
    if let Some(c) = current {
        push(c);
    }
    Ok(segments)
}

/// Segment index of every token.
pub fn token_segments(segments: &[Span], num_tokens: usize) -> Vec<usize> {
    let mut out = vec![0; num_tokens];
    for (i, s) in segments.iter().enumerate() {
        for t in s.start..=s.end.min(num_tokens.saturating_sub(1)) {
            out[t] = i;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc_with(lengths: &[usize]) -> Document {
        let sentences = lengths.iter().map(|&n| (0..n).map(|i| format!("t{i}")).collect()).collect();
        Document::new("nw/x_0", sentences)
    }

    fn ranges(segs: &[Segment]) -> Vec<(usize, usize)> {
        segs.iter().map(|s| (s.range.start, s.range.end)).collect()
    }

    #[test]
    fn short_document_is_one_segment() {
        let segs = segment_document(&doc_with(&[10]), 100).unwrap();
        assert_eq!(ranges(&segs), vec![(0, 9)]);
    }

    #[test]
    fn greedy_packing_of_three_sentences() {
        let segs = segment_document(&doc_with(&[5, 5, 5]), 10).unwrap();
        assert_eq!(ranges(&segs), vec![(0, 9), (10, 14)]);
    }

    #[test]
    fn long_sentence_overflows_alone() {
        let segs = segment_document(&doc_with(&[3, 12, 2]), 10).unwrap();
        assert_eq!(ranges(&segs), vec![(0, 2), (3, 14), (15, 16)]);
        assert!(segs[1].is_overflow());
        assert_eq!(segs[1].len(), 12);
    }

    #[test]
    fn zero_length_is_rejected() {
        assert!(matches!(segment_document(&doc_with(&[1]), 0), Err(Error::Argument(_))));
    }

    proptest! {
        #[test]
        fn segments_tile_the_document(lengths in prop::collection::vec(0usize..15, 0..12), max_len in 1usize..30) {
            let doc = doc_with(&lengths);
            let segs = segment_document(&doc, max_len).unwrap();
            let mut next = 0;
            for s in &segs {
                prop_assert_eq!(s.range.start, next);
                next = s.range.end + 1;
                // Sentences are never split.
                prop_assert!(doc.sentence_spans().iter().all(|x| s.range.contains(x) || x.end < s.range.start || x.start > s.range.end));
                prop_assert!(s.len() <= max_len || doc.sentence_spans().iter().any(|x| x == &s.range));
            }
            prop_assert_eq!(next, doc.num_tokens());
        }
    }
}
