use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive token range over the flattened document.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Overlapping without either containing the other.
    pub fn crosses(&self, other: &Span) -> bool {
        (self.start < other.start && other.start <= self.end && self.end < other.end)
            || (other.start < self.start && self.start <= other.end && other.end < self.end)
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.start, self.end)
    }
}

pub type Cluster = Vec<Span>;

/// Speaker assigned to tokens whose speaker is unknown.
pub const UNKNOWN_SPEAKER: &str = "-";

/// Genre used when the document key carries none.
pub const UNKNOWN_GENRE: &str = "xx";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_key: String,
    pub genre: String,
    pub sentences: Vec<Vec<String>>,
    /// One entry per token.
    pub speakers: Vec<String>,
    pub clusters: Vec<Cluster>,
    /// Segment boundaries written by preprocessing, if any.
    pub segments: Option<Vec<Span>>,
}

/// CoNLL genre convention: the first two characters of the document key.
pub fn genre_from_key(doc_key: &str) -> String {
    let genre: String = doc_key.chars().take(2).collect();
    if genre.chars().count() == 2 && genre.chars().all(|c| c.is_ascii_alphabetic()) {
        genre
    } else {
        UNKNOWN_GENRE.to_string()
    }
}

impl Document {
    pub fn new(doc_key: impl Into<String>, sentences: Vec<Vec<String>>) -> Self {
        let doc_key = doc_key.into();
        let n: usize = sentences.iter().map(Vec::len).sum();
        Self {
            genre: genre_from_key(&doc_key),
            doc_key,
            sentences,
            speakers: vec![UNKNOWN_SPEAKER.to_string(); n],
            clusters: Vec::new(),
            segments: None,
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    /// Inclusive token range of every non-empty sentence.
    pub fn sentence_spans(&self) -> Vec<Span> {
        let mut out = Vec::with_capacity(self.sentences.len());
        let mut start = 0;
        for s in &self.sentences {
            if !s.is_empty() {
                out.push(Span::new(start, start + s.len() - 1));
            }
            start += s.len();
        }
        out
    }

    pub fn num_mentions(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Mention -> cluster index.
    pub fn mention_to_cluster(&self) -> HashMap<Span, usize> {
        let mut map = HashMap::new();
        for (i, c) in self.clusters.iter().enumerate() {
            for &m in c {
                map.insert(m, i);
            }
        }
        map
    }

    /// Sorts mentions within clusters and clusters by their first mention.
    pub fn canonicalize(&mut self) {
        canonicalize_clusters(&mut self.clusters);
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidDocument {
            doc_key: self.doc_key.clone(),
            message,
        };
        let n = self.num_tokens();
        if self.speakers.len() != n {
            return Err(invalid(format!("{} speakers for {} tokens", self.speakers.len(), n)));
        }
        let mut seen = HashMap::new();
        for (i, cluster) in self.clusters.iter().enumerate() {
            for m in cluster {
                if m.start > m.end || m.end >= n {
                    return Err(invalid(format!("mention {m} out of range for {n} tokens")));
                }
                if let Some(prev) = seen.insert(*m, i) {
                    if prev != i {
                        return Err(invalid(format!("mention {m} appears in clusters {prev} and {i}")));
                    }
                    return Err(invalid(format!("mention {m} repeated in cluster {i}")));
                }
            }
        }
        if let Some(segments) = &self.segments {
            let mut next = 0;
            for s in segments {
                if s.start != next || s.end < s.start {
                    return Err(invalid(format!("segment {s} does not continue at token {next}")));
                }
                next = s.end + 1;
            }
            if next != n {
                return Err(invalid(format!("segments cover {next} of {n} tokens")));
            }
        }
        Ok(())
    }
}

pub fn canonicalize_clusters(clusters: &mut Vec<Cluster>) {
    for c in clusters.iter_mut() {
        c.sort();
        c.dedup();
    }
    clusters.retain(|c| !c.is_empty());
    clusters.sort();
}
