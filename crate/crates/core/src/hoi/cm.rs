use ndarray::Axis;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Ffnn, Matrix, ParamId, ParamStore, Tape, Var};
use crate::ranker::{AntecedentFrame, UnionFind};

/// Cluster-size buckets `1, 2, 3, 4, 5-7, 8+`.
pub const NUM_SIZE_BUCKETS: usize = 6;

pub fn size_bucket(size: usize) -> usize {
    match size {
        0..=4 => size.saturating_sub(1),
        5..=7 => 4,
        _ => 5,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmOrder {
    #[default]
    Sequential,
    EasyFirst,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmReduce {
    Mean,
    #[default]
    Max,
}

impl std::str::FromStr for CmOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Self::Sequential),
            "easy_first" | "easy-first" => Ok(Self::EasyFirst),
            _ => Err(Error::Config(format!("unknown cm.order {s:?}"))),
        }
    }
}

impl std::str::FromStr for CmReduce {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            _ => Err(Error::Config(format!("unknown cm.reduce {s:?}"))),
        }
    }
}

/// Visiting order. Easy-first sorts by each span's best candidate score,
/// descending, with span index breaking ties; spans without candidates
/// count as scoring 0, the dummy score.
pub fn ranking_order(base: &Matrix, frame: &AntecedentFrame, order: CmOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..frame.len()).collect();
    if order == CmOrder::EasyFirst {
        let best: Vec<f64> = (0..frame.len())
            .map(|x| (1..=frame.candidates[x].len()).map(|j| base[[x, j]]).fold(f64::NEG_INFINITY, f64::max))
            .map(|b| if b.is_finite() { b } else { 0.0 })
            .collect();
        idx.sort_by(|&a, &b| best[b].total_cmp(&best[a]).then(a.cmp(&b)));
    }
    idx
}

/// Result of cluster merging.
pub struct MergeOutcome {
    /// Final `k x width` scores: base scores plus the cluster term.
    pub scores: Var,
    pub decisions: Vec<Option<usize>>,
    /// Clusters over span indices, singletons included.
    pub clusters: Vec<Vec<usize>>,
    pub merges: usize,
}

/// The cluster compatibility network `f_c(g_x, C_y, phi(C_y))`.
#[derive(Clone, Debug)]
pub struct ClusterMerger {
    pub net: Ffnn,
    pub size_table: ParamId,
}

impl ClusterMerger {
    pub fn new(store: &mut ParamStore, span_dim: usize, feature_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let size_table = store.glorot("cm.size", NUM_SIZE_BUCKETS, feature_dim, rng);
        let net = Ffnn::new(store, "cm", 3 * span_dim + feature_dim, hidden, 1, rng);
        Self { net, size_table }
    }

    /// Ranks spans in the configured order, merging each span's cluster with
    /// that of its best antecedent. Candidates in clusters that have never
    /// been merged get no cluster term. When `enabled` is false the cluster
    /// term is dropped entirely and decisions equal the base argmax.
    ///
    #[allow(clippy::too_many_arguments)]
    pub fn rank(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        g: Var,
        base: Var,
        frame: &AntecedentFrame,
        order: CmOrder,
        reduce: CmReduce,
        enabled: bool,
    ) -> Result<MergeOutcome> {
        let k = frame.len();
        let base_values = tape.value(base).clone();
        let mut uf = UnionFind::new(k);
        let mut members: Vec<Vec<usize>> = (0..k).map(|x| vec![x]).collect();
        let mut decisions = vec![None; k];
        let mut pieces = Vec::new();
        let mut positions = Vec::new();
        let mut merges = 0;
        let size_table = tape.param(store, self.size_table);
        for x in ranking_order(&base_values, frame, order) {
            let mut row: Vec<f64> = (0..=frame.candidates[x].len()).map(|j| base_values[[x, j]]).collect();
            if enabled {
                let mut cols = Vec::new();
                let mut groups = Vec::new();
                let mut sizes = Vec::new();
                for (j, &y) in frame.candidates[x].iter().enumerate() {
                    let root = uf.find(y);
                    let cluster = &members[root];
                    if cluster.len() < 2 {
                        continue;
                    }
                    cols.push(j + 1);
                    groups.push(cluster.clone());
                    sizes.push(size_bucket(cluster.len()));
                }
                if !cols.is_empty() {
                    let rep = match reduce {
                        CmReduce::Mean => tape.group_mean(g, &groups),
                        CmReduce::Max => tape.group_max(g, &groups),
                    };
                    let gx = tape.gather_rows(g, &vec![x; cols.len()]);
                    let prod = tape.mul(gx, rep);
                    let size = tape.gather_rows(size_table, &sizes);
                    let input = tape.concat_cols(&[gx, rep, prod, size]);
                    let fc = self.net.forward(tape, store, input)?;
                    for (i, &c) in cols.iter().enumerate() {
                        row[c] += tape.value(fc)[[i, 0]];
                        positions.push((x, c));
                    }
                    pieces.push(fc);
                }
            }
            let mut best = (0.0, None);
            for (j, &y) in frame.candidates[x].iter().enumerate() {
                if row[j + 1] > best.0 {
                    best = (row[j + 1], Some(y));
                }
            }
            decisions[x] = best.1;
            if let Some(y) = best.1 {
                let (rx, ry) = (uf.find(x), uf.find(y));
                if rx != ry {
                    let root = uf.union(rx, ry);
                    let other = if root == rx { ry } else { rx };
                    let moved = std::mem::take(&mut members[other]);
                    members[root].extend(moved);
                    members[root].sort_unstable();
                    merges += 1;
                }
            }
        }
        let scores = if pieces.is_empty() {
            base
        } else {
            let fc = tape.concat_rows(&pieces);
            tape.add_at(base, fc, &positions)
        };
        Ok(MergeOutcome {
            scores,
            decisions,
            clusters: uf.groups(),
            merges,
        })
    }
}

/// Element-wise mean or max over the member rows.
pub fn reduce_rows(g: &Matrix, rows: &[usize], reduce: CmReduce) -> ndarray::Array1<f64> {
    let sel = g.select(Axis(0), rows);
    match reduce {
        CmReduce::Mean => sel.mean_axis(Axis(0)).expect("non-empty cluster"),
        CmReduce::Max => sel.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b)),
    }
}
