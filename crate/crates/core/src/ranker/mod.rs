//! Span enumeration, pruning, pairwise scoring, and antecedent decoding.

pub mod features;
pub mod frame;
pub mod scorer;
pub mod spans;
pub mod union_find;

pub use features::{genre_id, MetaFeatures, PairFeatures, SpanContext, GENRES};
pub use frame::{decode_clusters, link_components, select_candidates, AntecedentFrame};
pub use scorer::PairScorer;
pub use spans::{enumerate_spans, prune_budget, prune_spans, SpanCandidateSet};
pub use union_find::UnionFind;
