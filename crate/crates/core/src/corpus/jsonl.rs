//! Jsonlines working format: one document object per line with keys
//! `doc_key`, `sentences`, `speakers` (nested per sentence), `genre`,
//! `clusters` (arrays of `[start, end]`), and optionally `segments`.

use serde::{Deserialize, Serialize};

use super::document::{Cluster, Document, Span};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct JsonDocument {
    doc_key: String,
    sentences: Vec<Vec<String>>,
    speakers: Vec<Vec<String>>,
    genre: String,
    clusters: Vec<Cluster>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segments: Option<Vec<Span>>,
}

impl From<&Document> for JsonDocument {
    fn from(doc: &Document) -> Self {
        let mut speakers = doc.speakers.iter().cloned();
        let nested = doc
            .sentences
            .iter()
            .map(|s| speakers.by_ref().take(s.len()).collect())
            .collect();
        Self {
            doc_key: doc.doc_key.clone(),
            sentences: doc.sentences.clone(),
            speakers: nested,
            genre: doc.genre.clone(),
            clusters: doc.clusters.clone(),
            segments: doc.segments.clone(),
        }
    }
}

impl JsonDocument {
    fn into_document(self) -> Result<Document> {
        let shape_ok = self.speakers.len() == self.sentences.len()
            && self.speakers.iter().zip(&self.sentences).all(|(a, b)| a.len() == b.len());
        if !shape_ok {
            return Err(Error::InvalidDocument {
                doc_key: self.doc_key,
                message: "speakers do not mirror sentences".into(),
            });
        }
        let doc = Document {
            doc_key: self.doc_key,
            genre: self.genre,
            sentences: self.sentences,
            speakers: self.speakers.into_iter().flatten().collect(),
            clusters: self.clusters,
            segments: self.segments,
        };
        doc.validate()?;
        Ok(doc)
    }
}

pub fn document_to_json(doc: &Document) -> String {
    serde_json::to_string(&JsonDocument::from(doc)).expect("document serializes")
}

pub fn to_jsonlines(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&document_to_json(doc));
        out.push('\n');
    }
    out
}

/// Parses and validates every non-blank line.
pub fn from_jsonlines(text: &str) -> Result<Vec<Document>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let json: JsonDocument = serde_json::from_str(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
            json.into_document()
        })
        .collect()
}

pub fn read_jsonlines(path: impl AsRef<std::path::Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    from_jsonlines(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_list_is_empty_output() {
        assert_eq!(to_jsonlines(&[]), "");
        assert!(from_jsonlines("").unwrap().is_empty());
    }

    #[test]
    fn key_order_and_nesting() {
        let mut d = Document::new("tc/ch/00/ch_0001_0", vec![vec!["Hi".into()], vec!["you".into(), "there".into()]]);
        d.speakers = vec!["A".into(), "B".into(), "B".into()];
        d.clusters = vec![vec![Span::new(0, 0), Span::new(1, 1)]];
        let line = document_to_json(&d);
        assert_eq!(
            line,
            r#"{"doc_key":"tc/ch/00/ch_0001_0","sentences":[["Hi"],["you","there"]],"speakers":[["A"],["B","B"]],"genre":"tc","clusters":[[[0,0],[1,1]]]}"#
        );
        assert_eq!(from_jsonlines(&line).unwrap(), vec![d]);
    }

    #[test]
    fn invalid_documents_are_rejected() {
        let bad = r#"{"doc_key":"k","sentences":[["a"]],"speakers":[["A"]],"genre":"xx","clusters":[[[0,3]]]}"#;
        assert!(matches!(from_jsonlines(bad), Err(Error::InvalidDocument { .. })));
        assert!(matches!(from_jsonlines("{not json"), Err(Error::Format(_))));
    }
}
