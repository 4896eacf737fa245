//! Documents, CoNLL-2012 parsing, the jsonlines working format, and segmentation.

pub mod conll;
pub mod document;
pub mod jsonl;
pub mod segment;

pub use conll::{emit_conll, parse_conll};
pub use document::{genre_from_key, Cluster, Document, Span, UNKNOWN_GENRE, UNKNOWN_SPEAKER};
pub use jsonl::{from_jsonlines, read_jsonlines, to_jsonlines};
pub use segment::{segment_document, token_segments, Segment, DEFAULT_MAX_SEGMENT_LEN};
