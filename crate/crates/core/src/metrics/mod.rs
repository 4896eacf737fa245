//! Coreference metrics: MUC, B-cubed, and CEAF with the phi4 similarity.
//!
//! Conventions follow the corrected CoNLL-2012 reference scorer: clusters are
//! scored as given (gold singletons count for B-cubed and CEAF, never for
//! MUC), a mention missing from the other side contributes 0, and 0/0 is 0.
//! Corpus scores sum numerators and denominators over documents.

pub mod hungarian;
pub mod scores;

pub use hungarian::{assignment_weight, max_weight_assignment};
pub use scores::{
    avg_f1, b_cubed, b_cubed_counts, ceaf_alignment, ceaf_phi4, ceaf_phi4_counts, evaluate, f1, muc, muc_counts, phi4, Counts,
    Evaluator, MetricsReport, Prf,
};
