use crate::corpus::{Cluster, Span};
use crate::error::{Error, Result};
use crate::nn::tape::masked_softmax_rows;
use crate::nn::{Mask, Matrix};

use super::union_find::UnionFind;

/// Candidate antecedents of every kept span.
///
/// Score matrices over a frame are `k x width`: column 0 is the dummy
/// antecedent, scored 0, and column `j + 1` of row `x` is `candidates[x][j]`.
/// Candidates are stored nearest first.
#[derive(Clone, Debug, PartialEq)]
pub struct AntecedentFrame {
    pub spans: Vec<Span>,
    pub candidates: Vec<Vec<usize>>,
    width: usize,
}

impl AntecedentFrame {
    pub fn new(spans: Vec<Span>, candidates: Vec<Vec<usize>>) -> Result<Self> {
        if spans.len() != candidates.len() {
            return Err(Error::dim("candidate lists", spans.len(), candidates.len()));
        }
        for (x, c) in candidates.iter().enumerate() {
            if let Some(&y) = c.iter().find(|&&y| y >= x) {
                return Err(Error::Argument(format!("candidate {y} does not precede span {x}")));
            }
        }
        let width = 1 + candidates.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self { spans, candidates, width })
    }

    /// Every preceding span is a candidate, up to `cap` nearest ones.
    pub fn all_preceding(spans: Vec<Span>, cap: usize) -> Self {
        let candidates = (0..spans.len()).map(|x| (x.saturating_sub(cap)..x).rev().collect()).collect();
        Self::new(spans, candidates).expect("preceding candidates")
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_pairs(&self) -> usize {
        self.candidates.iter().map(Vec::len).sum()
    }

    /// `(x, y)` span pairs in row-major frame order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_pairs());
        for (x, c) in self.candidates.iter().enumerate() {
            out.extend(c.iter().map(|&y| (x, y)));
        }
        out
    }

    /// Frame cells of the pairs, in the order of [`pairs`](Self::pairs).
    pub fn positions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_pairs());
        for (x, c) in self.candidates.iter().enumerate() {
            out.extend((0..c.len()).map(|j| (x, j + 1)));
        }
        out
    }

    /// Valid cells: the dummy column and each row's candidates.
    pub fn mask(&self) -> Mask {
        Mask::from_shape_fn((self.len(), self.width), |(x, j)| j <= self.candidates[x].len())
    }

    /// Span index of the antecedent in a frame cell; `None` for the dummy.
    pub fn antecedent(&self, x: usize, col: usize) -> Option<usize> {
        col.checked_sub(1).map(|j| self.candidates[x][j])
    }

    /// Per-span argmax. Ties go to the dummy, then to the nearest candidate.
    pub fn decide(&self, scores: &Matrix) -> Vec<Option<usize>> {
        (0..self.len())
            .map(|x| {
                let mut best = (0.0, None);
                for (j, &y) in self.candidates[x].iter().enumerate() {
                    let s = scores[[x, j + 1]];
                    if s > best.0 {
                        best = (s, Some(y));
                    }
                }
                best.1
            })
            .collect()
    }

    /// Row-wise softmax over valid cells.
    pub fn distribution(&self, scores: &Matrix) -> Matrix {
        masked_softmax_rows(scores, &self.mask())
    }
}

/// Keeps the `cap` best-scoring preceding spans of each row of a `k x k`
/// score matrix, returned nearest first. Equal scores prefer nearer spans.
pub fn select_candidates(coarse: &Matrix, cap: usize) -> Vec<Vec<usize>> {
    (0..coarse.nrows())
        .map(|x| {
            let mut ys: Vec<usize> = (0..x).rev().collect();
            ys.sort_by(|&a, &b| coarse[[x, b]].total_cmp(&coarse[[x, a]]).then(b.cmp(&a)));
            ys.truncate(cap);
            ys.sort_by(|a, b| b.cmp(a));
            ys
        })
        .collect()
}

/// Connected components of the link graph over `0..n`, singletons included.
pub fn link_components(decisions: &[Option<usize>]) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(decisions.len());
    for (x, y) in decisions.iter().enumerate() {
        if let Some(y) = *y {
            uf.union(x, y);
        }
    }
    uf.groups()
}

/// Predicted clusters: link components with at least two spans.
pub fn decode_clusters(spans: &[Span], decisions: &[Option<usize>]) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = link_components(decisions)
        .into_iter()
        .filter(|g| g.len() > 1)
        .map(|g| g.into_iter().map(|i| spans[i]).collect())
        .collect();
    crate::corpus::document::canonicalize_clusters(&mut clusters);
    clusters
}
