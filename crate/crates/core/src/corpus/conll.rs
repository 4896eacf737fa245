//! CoNLL-2012 `*_conll` column files.
//!
//! Only three columns matter here: the word (column 3), the speaker
//! (column 9), and the coreference column (last). Everything else is
//! skipped on input and written as placeholders on output.

use std::collections::HashMap;
use std::fmt::Write as _;

use tracing::warn;

use super::document::{canonicalize_clusters, genre_from_key, Cluster, Document, Span, UNKNOWN_SPEAKER};
use crate::error::{Error, Result};

const MIN_COLUMNS: usize = 12;
const WORD_COL: usize = 3;
const SPEAKER_COL: usize = 9;

struct Pending {
    doc_key: String,
    sentences: Vec<Vec<String>>,
    current: Vec<String>,
    speakers: Vec<String>,
    open: HashMap<String, Vec<(usize, usize)>>,
    clusters: Vec<(String, Cluster)>,
    cluster_index: HashMap<String, usize>,
}

impl Pending {
    fn new(doc_key: String) -> Self {
        Self {
            doc_key,
            sentences: Vec::new(),
            current: Vec::new(),
            speakers: Vec::new(),
            open: HashMap::new(),
            clusters: Vec::new(),
            cluster_index: HashMap::new(),
        }
    }

    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            doc_key: self.doc_key.clone(),
            line,
            message: message.into(),
        }
    }

    fn add_mention(&mut self, id: &str, span: Span) {
        let idx = match self.cluster_index.get(id) {
            Some(&i) => i,
            None => {
                self.clusters.push((id.to_string(), Vec::new()));
                self.cluster_index.insert(id.to_string(), self.clusters.len() - 1);
                self.clusters.len() - 1
            }
        };
        self.clusters[idx].1.push(span);
    }

    fn token(&mut self, cols: &[&str], line: usize) -> Result<()> {
        if cols.len() < MIN_COLUMNS {
            return Err(Error::Format(format!(
                "{}: line {line}: expected at least {MIN_COLUMNS} columns, found {}",
                self.doc_key,
                cols.len()
            )));
        }
        let position = self.speakers.len();
        self.current.push(cols[WORD_COL].to_string());
        self.speakers.push(cols[SPEAKER_COL].to_string());
        let coref = cols[cols.len() - 1];
        if coref == "-" {
            return Ok(());
        }
        for part in coref.split('|') {
            let opens = part.starts_with('(');
            let closes = part.ends_with(')');
            let id = part.trim_start_matches('(').trim_end_matches(')');
            if id.is_empty() || (!opens && !closes) {
                return Err(self.error(line, format!("malformed coreference entry {part:?}")));
            }
            match (opens, closes) {
                (true, true) => self.add_mention(id, Span::new(position, position)),
                (true, false) => self.open.entry(id.to_string()).or_default().push((position, line)),
                (false, true) => {
                    let Some((start, _)) = self.open.get_mut(id).and_then(Vec::pop) else {
                        return Err(self.error(line, format!("closing bracket for {id} without an opening")));
                    };
                    self.add_mention(id, Span::new(start, position));
                }
                (false, false) => unreachable!(),
            }
        }
        Ok(())
    }

    fn end_sentence(&mut self) {
        if !self.current.is_empty() {
            self.sentences.push(std::mem::take(&mut self.current));
        }
    }

    fn finish(mut self) -> Result<Document> {
        self.end_sentence();
        if let Some((id, line)) = self
            .open
            .iter()
            .flat_map(|(id, starts)| starts.iter().map(move |&(_, line)| (id, line)))
            .min_by_key(|&(_, line)| line)
        {
            return Err(self.error(line, format!("unclosed bracket for {id}")));
        }
        let mut seen: HashMap<Span, String> = HashMap::new();
        let mut clusters = Vec::new();
        for (id, mentions) in self.clusters {
            let mut kept = Vec::new();
            for m in mentions {
                match seen.get(&m) {
                    Some(other) if other != &id => {
                        warn!(doc_key = %self.doc_key, mention = %m, "mention in two clusters; keeping the first")
                    }
                    Some(_) => {}
                    None => {
                        seen.insert(m, id.clone());
                        kept.push(m);
                    }
                }
            }
            clusters.push(kept);
        }
        canonicalize_clusters(&mut clusters);
        let speakers = self
            .speakers
            .into_iter()
            .map(|s| if s.is_empty() { UNKNOWN_SPEAKER.to_string() } else { s })
            .collect();
        Ok(Document {
            genre: genre_from_key(&self.doc_key),
            doc_key: self.doc_key,
            sentences: self.sentences,
            speakers,
            clusters,
            segments: None,
        })
    }
}

/// `#begin document (name); part 000` -> `name_0`.
fn doc_key_from_header(header: &str) -> Option<String> {
    let rest = header.strip_prefix("#begin document")?.trim();
    let rest = rest.strip_prefix('(')?;
    let close = rest.find(')')?;
    let name = &rest[..close];
    let part = rest[close + 1..]
        .trim_start_matches(';')
        .trim()
        .strip_prefix("part")
        .map(str::trim)
        .and_then(|p| p.parse::<u32>().ok())
        .unwrap_or(0);
    Some(format!("{name}_{part}"))
}

/// Parses every document in a CoNLL-2012 column file.
pub fn parse_conll(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut pending: Option<Pending> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.starts_with("#begin document") {
            if let Some(p) = pending.take() {
                return Err(p.error(line, "new document before #end document"));
            }
            let key = doc_key_from_header(trimmed)
                .ok_or_else(|| Error::Format(format!("line {line}: malformed document header {trimmed:?}")))?;
            pending = Some(Pending::new(key));
        } else if trimmed.starts_with("#end document") {
            let p = pending
                .take()
                .ok_or_else(|| Error::Format(format!("line {line}: #end document without #begin")))?;
            docs.push(p.finish()?);
        } else if trimmed.is_empty() {
            if let Some(p) = pending.as_mut() {
                p.end_sentence();
            }
        } else if trimmed.starts_with('#') {
            continue;
        } else {
            let p = pending
                .as_mut()
                .ok_or_else(|| Error::Format(format!("line {line}: token outside a document")))?;
            let cols: Vec<&str> = trimmed.split_whitespace().collect();
            p.token(&cols, line)?;
        }
    }
    if let Some(p) = pending {
        return Err(p.error(text.lines().count(), "missing #end document"));
    }
    Ok(docs)
}

fn split_doc_key(doc_key: &str) -> (&str, u32) {
    if let Some((name, part)) = doc_key.rsplit_once('_') {
        if let Ok(p) = part.parse() {
            return (name, p);
        }
    }
    (doc_key, 0)
}

/// Coreference column entries for every token: closings, unit mentions,
/// then openings, so that the stack discipline of the parser recovers the
/// same spans.
fn coref_column(doc: &Document) -> Vec<String> {
    let n = doc.num_tokens();
    let mut closes: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut units: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut opens: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (id, cluster) in doc.clusters.iter().enumerate() {
        for m in cluster {
            if m.start == m.end {
                units[m.start].push(id);
            } else {
                opens[m.start].push((m.end, id));
                closes[m.end].push((m.start, id));
            }
        }
    }
    (0..n)
        .map(|t| {
            // Inner (later-starting) spans close first; outer (later-ending) spans open first.
            closes[t].sort_by(|a, b| b.cmp(a));
            opens[t].sort_by(|a, b| b.cmp(a));
            let parts: Vec<String> = closes[t]
                .iter()
                .map(|&(_, id)| format!("{id})"))
                .chain(units[t].iter().map(|id| format!("({id})")))
                .chain(opens[t].iter().map(|&(_, id)| format!("({id}")))
                .collect();
            if parts.is_empty() {
                "-".to_string()
            } else {
                parts.join("|")
            }
        })
        .collect()
}

/// Writes documents in the 12-column CoNLL-2012 layout.
pub fn emit_conll(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        let (name, part) = split_doc_key(&doc.doc_key);
        let coref = coref_column(doc);
        writeln!(out, "#begin document ({name}); part {part:03}").unwrap();
        let mut t = 0;
        for sentence in &doc.sentences {
            if sentence.is_empty() {
                continue;
            }
            for (i, word) in sentence.iter().enumerate() {
                let speaker = doc.speakers[t].replace(char::is_whitespace, "_");
                let speaker = if speaker.is_empty() { UNKNOWN_SPEAKER } else { &speaker };
                writeln!(out, "{name}\t{part}\t{i}\t{word}\t-\t*\t-\t-\t-\t{speaker}\t*\t{}", coref[t]).unwrap();
                t += 1;
            }
            out.push('\n');
        }
        out.push_str("#end document\n");
    }
    out
}
