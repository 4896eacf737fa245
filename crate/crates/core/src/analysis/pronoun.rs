use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Span};
use crate::error::{Error, Result};
use crate::model::Prediction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PronounClass {
    Singular,
    Plural,
    Ambiguous,
}

/// Case-insensitive personal pronoun lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PronounLexicon {
    words: HashMap<String, PronounClass>,
}

const SINGULAR: &[&str] = &["he", "him", "his", "she", "her", "hers", "it", "its", "i", "me", "my", "mine"];
const PLURAL: &[&str] = &["they", "them", "their", "theirs", "we", "us", "our", "ours"];
const AMBIGUOUS: &[&str] = &["you", "your", "yours"];

impl Default for PronounLexicon {
    fn default() -> Self {
        let mut words = HashMap::new();
        for (list, class) in [(SINGULAR, PronounClass::Singular), (PLURAL, PronounClass::Plural), (AMBIGUOUS, PronounClass::Ambiguous)] {
            words.extend(list.iter().map(|w| (w.to_string(), class)));
        }
        Self { words }
    }
}

impl PronounLexicon {
    /// Parses lines of the form `singular: he him his`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut words = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (class, list) = line
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("lexicon line {}: expected `class: words`", i + 1)))?;
            let class = match class.trim().to_ascii_lowercase().as_str() {
                "singular" => PronounClass::Singular,
                "plural" => PronounClass::Plural,
                "ambiguous" => PronounClass::Ambiguous,
                other => return Err(Error::Format(format!("lexicon line {}: unknown class {other:?}", i + 1))),
            };
            for w in list.split_whitespace() {
                if let Some(prev) = words.insert(w.to_lowercase(), class) {
                    if prev != class {
                        return Err(Error::Format(format!("lexicon lists {w:?} in two classes")));
                    }
                }
            }
        }
        Ok(Self { words })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
    }

    pub fn classify(&self, word: &str) -> Option<PronounClass> {
        self.words.get(&word.to_lowercase()).copied()
    }

    /// Class of a span: pronouns are single tokens.
    pub fn classify_span(&self, tokens: &[&str], span: Span) -> Option<PronounClass> {
        (span.start == span.end).then(|| self.classify(tokens[span.start])).flatten()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PronounReport {
    /// Singular anaphor linked to a plural antecedent.
    pub sp: usize,
    /// Plural anaphor linked to a singular antecedent.
    pub ps: usize,
    /// Pronoun links whose anaphor is in no gold cluster.
    pub fl: usize,
    /// Pronoun links from a gold mention to a pronoun outside its gold cluster.
    pub wl: usize,
    /// Predicted clusters holding both singular and plural pronouns.
    pub bc: usize,
    /// The part of `bc` whose clusters also hold an ambiguous pronoun.
    pub bc_ambiguous: usize,
}

impl PronounReport {
    pub fn add(&mut self, o: &PronounReport) {
        self.sp += o.sp;
        self.ps += o.ps;
        self.fl += o.fl;
        self.wl += o.wl;
        self.bc += o.bc;
        self.bc_ambiguous += o.bc_ambiguous;
    }
}

/// Pronoun errors of one document's final decisions and clusters.
///
/// Link counts consider links whose both ends are singular or plural
/// pronouns; ambiguous pronouns take part only in the `bc` sub-count.
pub fn document_pronouns(pred: &Prediction, doc: &Document, lexicon: &PronounLexicon) -> Result<PronounReport> {
    let tokens: Vec<&str> = doc.tokens().collect();
    let n = tokens.len();
    if let Some(s) = pred.spans.iter().find(|s| s.end >= n) {
        return Err(Error::Alignment(format!("span {s} of {} exceeds {n} tokens", doc.doc_key)));
    }
    let gold = doc.mention_to_cluster();
    let mut r = PronounReport::default();
    for (x, y) in pred.antecedents.iter().enumerate() {
        let Some(y) = *y else { continue };
        let (sx, sy) = (pred.spans[x], pred.spans[y]);
        let (Some(cx), Some(cy)) = (lexicon.classify_span(&tokens, sx), lexicon.classify_span(&tokens, sy)) else {
            continue;
        };
        if cx == PronounClass::Ambiguous || cy == PronounClass::Ambiguous {
            continue;
        }
        match (cx, cy) {
            (PronounClass::Singular, PronounClass::Plural) => r.sp += 1,
            (PronounClass::Plural, PronounClass::Singular) => r.ps += 1,
            _ => {}
        }
        match gold.get(&sx) {
            None => r.fl += 1,
            Some(c) if gold.get(&sy) != Some(c) => r.wl += 1,
            Some(_) => {}
        }
    }
    for cluster in &pred.clusters {
        let classes: HashSet<PronounClass> = cluster.iter().filter_map(|&s| lexicon.classify_span(&tokens, s)).collect();
        if classes.contains(&PronounClass::Singular) && classes.contains(&PronounClass::Plural) {
            r.bc += 1;
            if classes.contains(&PronounClass::Ambiguous) {
                r.bc_ambiguous += 1;
            }
        }
    }
    Ok(r)
}

/// Corpus-level pronoun report; predictions are matched to gold by `doc_key`.
pub fn pronoun_analysis(preds: &[Prediction], gold: &[Document], lexicon: &PronounLexicon) -> Result<PronounReport> {
    let gold: HashMap<&str, &Document> = gold.iter().map(|d| (d.doc_key.as_str(), d)).collect();
    let mut total = PronounReport::default();
    for p in preds {
        let doc = gold.get(p.doc_key.as_str()).ok_or_else(|| Error::MissingDocument(p.doc_key.clone()))?;
        total.add(&document_pronouns(p, doc, lexicon)?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(words: &str) -> Document {
        Document::new("bc/p_0", vec![words.split(' ').map(String::from).collect()])
    }

    fn pred(links: Vec<Option<usize>>, clusters: Vec<Vec<usize>>) -> Prediction {
        let spans: Vec<Span> = (0..links.len()).map(|i| Span::new(i, i)).collect();
        Prediction {
            doc_key: "bc/p_0".into(),
            clusters: clusters.iter().map(|c| c.iter().map(|&i| spans[i]).collect()).collect(),
            spans,
            pre_hoi_antecedents: vec![None; links.len()],
            antecedents: links,
        }
    }

    #[test]
    fn no_pronouns_no_counts() {
        let d = doc("cats like dogs");
        let p = pred(vec![None, Some(0), Some(1)], vec![vec![0, 1, 2]]);
        assert_eq!(document_pronouns(&p, &d, &PronounLexicon::default()).unwrap(), PronounReport::default());
    }

    #[test]
    fn singular_to_plural_across_gold_clusters() {
        let mut d = doc("they said he left");
        d.clusters = vec![vec![Span::new(0, 0)], vec![Span::new(2, 2)]];
        let p = pred(vec![None, None, Some(0), None], vec![vec![0, 2]]);
        let r = document_pronouns(&p, &d, &PronounLexicon::default()).unwrap();
        assert_eq!((r.sp, r.ps, r.fl, r.wl, r.bc), (1, 0, 0, 1, 1));
    }

    #[test]
    fn false_link_and_ambiguous_cluster() {
        let d = doc("We know you know it");
        let p = pred(vec![None, None, None, None, Some(0)], vec![vec![0, 2, 4]]);
        let r = document_pronouns(&p, &d, &PronounLexicon::default()).unwrap();
        assert_eq!((r.ps, r.sp, r.fl, r.bc, r.bc_ambiguous), (0, 1, 1, 1, 1));
    }

    #[test]
    fn lexicon_file_format() {
        let lex = PronounLexicon::parse("# test\nsingular: He\nplural: they\nambiguous: you\n").unwrap();
        assert_eq!(lex.classify("he"), Some(PronounClass::Singular));
        assert_eq!(lex.classify("YOU"), Some(PronounClass::Ambiguous));
        assert_eq!(lex.classify("she"), None);
        assert!(PronounLexicon::parse("dual: both").is_err());
    }
}
