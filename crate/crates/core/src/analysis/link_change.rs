use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Span};
use crate::error::{Error, Result};
use crate::model::Prediction;

/// Antecedent decisions of one pass over one document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionSet {
    pub doc_key: String,
    pub spans: Vec<Span>,
    pub antecedents: Vec<Option<usize>>,
}

impl DecisionSet {
    pub fn final_decisions(p: &Prediction) -> Self {
        Self {
            doc_key: p.doc_key.clone(),
            spans: p.spans.clone(),
            antecedents: p.antecedents.clone(),
        }
    }

    pub fn pre_hoi_decisions(p: &Prediction) -> Self {
        Self {
            doc_key: p.doc_key.clone(),
            spans: p.spans.clone(),
            antecedents: p.pre_hoi_antecedents.clone(),
        }
    }
}

/// Counts of decision changes between two passes. `W2C` is wrong before and
/// correct after, and so on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkChangeReport {
    pub w2c: usize,
    pub c2w: usize,
    pub c2c: usize,
    pub w2w: usize,
    /// `W2C / (W2C + W2W)`: share of wrong links that HOI fixed.
    pub w2c_pct: f64,
    /// `C2W / (C2W + C2C)`: share of correct links that HOI broke.
    pub c2w_pct: f64,
}

impl LinkChangeReport {
    pub fn total(&self) -> usize {
        self.w2c + self.c2w + self.c2c + self.w2w
    }

    fn finish(mut self) -> Self {
        let pct = |a: usize, b: usize| if a + b == 0 { 0.0 } else { 100.0 * a as f64 / (a + b) as f64 };
        self.w2c_pct = pct(self.w2c, self.w2w);
        self.c2w_pct = pct(self.c2w, self.c2c);
        self
    }
}

fn by_key<'a>(sets: &'a [DecisionSet], side: &str) -> Result<HashMap<&'a str, &'a DecisionSet>> {
    let mut map = HashMap::new();
    for s in sets {
        if s.spans.len() != s.antecedents.len() {
            return Err(Error::Alignment(format!("{side} pass of {}: {} spans, {} decisions", s.doc_key, s.spans.len(), s.antecedents.len())));
        }
        if map.insert(s.doc_key.as_str(), s).is_some() {
            return Err(Error::Alignment(format!("{side} pass lists {} twice", s.doc_key)));
        }
    }
    Ok(map)
}

/// Classifies every mention that picks a real antecedent in both passes.
///
/// A decision is correct when the mention and its antecedent are mentions
/// of the same gold cluster. With `include_nongold` false, only mentions that
/// exactly match a gold mention are counted; otherwise the rest count as
/// wrong.
pub fn link_change(before: &[DecisionSet], after: &[DecisionSet], gold: &[Document], include_nongold: bool) -> Result<LinkChangeReport> {
    let b = by_key(before, "before")?;
    let a = by_key(after, "after")?;
    let gold: HashMap<&str, &Document> = gold.iter().map(|d| (d.doc_key.as_str(), d)).collect();
    if let Some(k) = a.keys().find(|k| !b.contains_key(*k)) {
        return Err(Error::Alignment(format!("{k} appears only in the after pass")));
    }
    let mut keys: Vec<&str> = b.keys().copied().collect();
    keys.sort_unstable();
    let mut report = LinkChangeReport::default();
    for key in keys {
        let (pb, pa) = (b[key], a.get(key).ok_or_else(|| Error::Alignment(format!("{key} appears only in the before pass")))?);
        if pb.spans != pa.spans {
            return Err(Error::Alignment(format!("span sets of {key} differ between passes")));
        }
        let doc = gold.get(key).ok_or_else(|| Error::MissingDocument(key.to_string()))?;
        let cluster = doc.mention_to_cluster();
        let correct = |x: usize, y: usize| {
            matches!((cluster.get(&pb.spans[x]), cluster.get(&pb.spans[y])), (Some(cx), Some(cy)) if cx == cy)
        };
        for x in 0..pb.spans.len() {
            let (Some(yb), Some(ya)) = (pb.antecedents[x], pa.antecedents[x]) else {
                continue;
            };
            if !include_nongold && !cluster.contains_key(&pb.spans[x]) {
                continue;
            }
            match (correct(x, yb), correct(x, ya)) {
                (false, true) => report.w2c += 1,
                (true, false) => report.c2w += 1,
                (true, true) => report.c2c += 1,
                (false, false) => report.w2w += 1,
            }
        }
    }
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> Document {
        let mut d = Document::new("nw/a_0", vec![(0..6).map(|i| format!("w{i}")).collect()]);
        d.clusters = vec![vec![Span::new(0, 0), Span::new(2, 2), Span::new(4, 4)], vec![Span::new(1, 1), Span::new(3, 3)]];
        d
    }

    fn set(links: Vec<Option<usize>>) -> DecisionSet {
        DecisionSet {
            doc_key: "nw/a_0".into(),
            spans: (0..links.len()).map(|i| Span::new(i, i)).collect(),
            antecedents: links,
        }
    }

    #[test]
    fn each_cell() {
        let before = set(vec![None, None, Some(1), Some(1), Some(0), Some(3)]);
        let after = set(vec![None, None, Some(0), Some(0), Some(2), Some(3)]);
        let r = link_change(&[before.clone()], &[after.clone()], &[doc()], true).unwrap();
        assert_eq!((r.w2c, r.c2w, r.c2c, r.w2w), (1, 1, 1, 1));
        assert_eq!(r.total(), 4);
        let r = link_change(&[before], &[after], &[doc()], false).unwrap();
        assert_eq!(r.total(), 3);
    }

    #[test]
    fn identical_passes_never_change() {
        let s = set(vec![None, Some(0), Some(1), None, Some(2), Some(0)]);
        let r = link_change(&[s.clone()], &[s], &[doc()], true).unwrap();
        assert_eq!((r.w2c, r.c2w), (0, 0));
    }

    #[test]
    fn misaligned_spans_are_rejected() {
        let a = set(vec![None, Some(0)]);
        let mut b = a.clone();
        b.spans[1] = Span::new(1, 2);
        assert!(matches!(link_change(&[a], &[b], &[doc()], true), Err(Error::Alignment(_))));
    }
}
