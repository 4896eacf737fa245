//! Higher-order inference: span refinement (attended antecedent, entity
//! equalization, span clustering) and cluster merging.

pub mod aa;
pub mod cm;
pub mod ee;
pub mod sc;

use serde::{Deserialize, Serialize};

pub use aa::{attended_antecedent, attended_antecedent_values};
pub use cm::{ranking_order, reduce_rows, size_bucket, ClusterMerger, CmOrder, CmReduce, MergeOutcome};
pub use ee::{entity_equalization, entity_membership, membership_values};
pub use sc::{refinement_clusters, span_clustering};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoiMethod {
    #[default]
    None,
    Aa,
    Ee,
    Sc,
    Cm,
}

impl HoiMethod {
    pub const ALL: [HoiMethod; 5] = [HoiMethod::None, HoiMethod::Aa, HoiMethod::Ee, HoiMethod::Sc, HoiMethod::Cm];

    pub fn name(self) -> &'static str {
        match self {
            HoiMethod::None => "none",
            HoiMethod::Aa => "aa",
            HoiMethod::Ee => "ee",
            HoiMethod::Sc => "sc",
            HoiMethod::Cm => "cm",
        }
    }

    /// Methods that refine span vectors through the gate.
    pub fn refines(self) -> bool {
        matches!(self, HoiMethod::Aa | HoiMethod::Ee | HoiMethod::Sc)
    }
}

impl std::fmt::Display for HoiMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for HoiMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        HoiMethod::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown hoi.method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoiConfig {
    pub method: HoiMethod,
    /// Re-scoring passes after refinement.
    pub rounds: usize,
    pub cm_order: CmOrder,
    pub cm_reduce: CmReduce,
    /// Span budget under entity equalization, whose memory is quadratic.
    pub ee_max_spans: usize,
}

impl Default for HoiConfig {
    fn default() -> Self {
        Self {
            method: HoiMethod::None,
            rounds: 1,
            cm_order: CmOrder::Sequential,
            cm_reduce: CmReduce::Max,
            ee_max_spans: 300,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in HoiMethod::ALL {
            assert_eq!(m.name().parse::<HoiMethod>().unwrap(), m);
        }
        assert!("xx".parse::<HoiMethod>().is_err());
    }
}
