use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Cluster, Span};
use crate::error::{Error, Result};

/// Per-document prediction dump.
///
/// `antecedents[i]` and `pre_hoi_antecedents[i]` index into `spans`; `null`
/// marks the dummy antecedent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_key: String,
    pub clusters: Vec<Cluster>,
    pub spans: Vec<Span>,
    pub antecedents: Vec<Option<usize>>,
    pub pre_hoi_antecedents: Vec<Option<usize>>,
}

impl Prediction {
    pub fn validate(&self) -> Result<()> {
        let k = self.spans.len();
        let bad = |m: String| Err(Error::Format(format!("prediction {}: {m}", self.doc_key)));
        if self.antecedents.len() != k || self.pre_hoi_antecedents.len() != k {
            return bad(format!("{k} spans but {}/{} decisions", self.antecedents.len(), self.pre_hoi_antecedents.len()));
        }
        for decisions in [&self.antecedents, &self.pre_hoi_antecedents] {
            for (x, y) in decisions.iter().enumerate() {
                if matches!(y, Some(y) if *y >= x) {
                    return bad(format!("span {x} links to non-preceding span {}", y.unwrap()));
                }
            }
        }
        Ok(())
    }

    /// Decisions as span pairs, `(anaphor, antecedent)`.
    pub fn links(&self, pre_hoi: bool) -> Vec<(Span, Option<Span>)> {
        let decisions = if pre_hoi { &self.pre_hoi_antecedents } else { &self.antecedents };
        self.spans
            .iter()
            .zip(decisions)
            .map(|(&s, d)| (s, d.map(|y| self.spans[y])))
            .collect()
    }
}

pub fn write_predictions(preds: &[Prediction]) -> String {
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let p: Prediction = serde_json::from_str(line).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}
