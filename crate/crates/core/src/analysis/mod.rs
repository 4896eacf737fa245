//! Analyses of what the higher-order step changes: the HOI-off ablation,
//! link-change accounting, and pronoun errors.

pub mod hoi_off;
pub mod link_change;
pub mod pronoun;

pub use hoi_off::{evaluate_model, hoi_off_eval, HoiOffReport};
pub use link_change::{link_change, DecisionSet, LinkChangeReport};
pub use pronoun::{document_pronouns, pronoun_analysis, PronounClass, PronounLexicon, PronounReport};
