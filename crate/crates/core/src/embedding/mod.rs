//! Token embedding providers and span representations.

pub mod container;
pub mod provider;
pub mod span;

pub use container::{load_embeddings, write_container, write_json, EmbeddingStore};
pub use provider::{hash_embeddings, EmbeddingProvider, TokenEmbeddings};
pub use span::{bucket, build_span_repr, SpanEncoder, SpanRepr, NUM_BUCKETS};
