use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::hungarian::{assignment_weight, max_weight_assignment};
use crate::corpus::{Cluster, Span};

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Numerators and denominators of one metric; summing these across
/// documents gives corpus-level scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub p_num: f64,
    pub p_den: f64,
    pub r_num: f64,
    pub r_den: f64,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.p_num += other.p_num;
        self.p_den += other.p_den;
        self.r_num += other.r_num;
        self.r_den += other.r_den;
    }

    pub fn prf(&self) -> Prf {
        let precision = ratio(self.p_num, self.p_den);
        let recall = ratio(self.r_num, self.r_den);
        Prf {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }

    /// Same counts with precision and recall exchanged.
    pub fn swapped(&self) -> Counts {
        Counts {
            p_num: self.r_num,
            p_den: self.r_den,
            r_num: self.p_num,
            r_den: self.p_den,
        }
    }
}

fn index(clusters: &[Cluster]) -> HashMap<Span, usize> {
    let mut map = HashMap::new();
    for (i, c) in clusters.iter().enumerate() {
        for &m in c {
            map.insert(m, i);
        }
    }
    map
}

/// Recall side of MUC: for each key chain, `|K| - |p(K)|` where `p(K)` is the
/// partition of `K` induced by the response. Mentions missing from the
/// response each form their own part.
fn muc_side(key: &[Cluster], response: &[Cluster]) -> (f64, f64) {
    let resp = index(response);
    let (mut num, mut den) = (0.0, 0.0);
    for k in key {
        if k.is_empty() {
            continue;
        }
        let mut parts = std::collections::HashSet::new();
        let mut missing = 0;
        for m in k {
            match resp.get(m) {
                Some(&c) => {
                    parts.insert(c);
                }
                None => missing += 1,
            }
        }
        num += (k.len() - parts.len() - missing) as f64;
        den += (k.len() - 1) as f64;
    }
    (num, den)
}

/// Link-based MUC. Singleton chains contribute nothing to either side.
pub fn muc_counts(gold: &[Cluster], pred: &[Cluster]) -> Counts {
    let (r_num, r_den) = muc_side(gold, pred);
    let (p_num, p_den) = muc_side(pred, gold);
    Counts { p_num, p_den, r_num, r_den }
}

/// Per-mention side of B-cubed: `sum_m |K_m & R_m| / |K_m|` over key mentions,
/// where a mention absent from the response (twinless) scores 0.
fn b_cubed_side(key: &[Cluster], response: &[Cluster]) -> (f64, f64) {
    let resp = index(response);
    let (mut num, mut den) = (0.0, 0.0);
    for k in key {
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for m in k {
            if let Some(&c) = resp.get(m) {
                *overlap.entry(c).or_default() += 1;
            }
        }
        // Each mention in K sharing response cluster c scores |K & c| / |K|.
        num += overlap.values().map(|&n| (n * n) as f64).sum::<f64>() / k.len().max(1) as f64;
        den += k.len() as f64;
    }
    (num, den)
}

/// Mention-based B-cubed with the reference scorer's twinless convention.
pub fn b_cubed_counts(gold: &[Cluster], pred: &[Cluster]) -> Counts {
    let (r_num, r_den) = b_cubed_side(gold, pred);
    let (p_num, p_den) = b_cubed_side(pred, gold);
    Counts { p_num, p_den, r_num, r_den }
}

pub fn phi4(a: &Cluster, b: &Cluster) -> f64 {
    let inter = a.iter().filter(|m| b.contains(m)).count();
    ratio(2.0 * inter as f64, (a.len() + b.len()) as f64)
}

/// Optimal total similarity of a one-to-one alignment of gold to predicted clusters.
pub fn ceaf_alignment(gold: &[Cluster], pred: &[Cluster]) -> f64 {
    if gold.is_empty() || pred.is_empty() {
        return 0.0;
    }
    let pred_index = index(pred);
    let weights: Vec<Vec<f64>> = gold
        .iter()
        .map(|k| {
            let mut row = vec![0.0; pred.len()];
            let mut inter = vec![0usize; pred.len()];
            for m in k {
                if let Some(&c) = pred_index.get(m) {
                    inter[c] += 1;
                }
            }
            for (c, &n) in inter.iter().enumerate() {
                row[c] = ratio(2.0 * n as f64, (k.len() + pred[c].len()) as f64);
            }
            row
        })
        .collect();
    assignment_weight(&weights, &max_weight_assignment(&weights))
}

/// Entity-based CEAF with the phi4 similarity.
pub fn ceaf_phi4_counts(gold: &[Cluster], pred: &[Cluster]) -> Counts {
    let total = ceaf_alignment(gold, pred);
    Counts {
        p_num: total,
        p_den: pred.len() as f64,
        r_num: total,
        r_den: gold.len() as f64,
    }
}

pub fn muc(gold: &[Cluster], pred: &[Cluster]) -> Prf {
    muc_counts(gold, pred).prf()
}

pub fn b_cubed(gold: &[Cluster], pred: &[Cluster]) -> Prf {
    b_cubed_counts(gold, pred).prf()
}

pub fn ceaf_phi4(gold: &[Cluster], pred: &[Cluster]) -> Prf {
    ceaf_phi4_counts(gold, pred).prf()
}

/// Arithmetic mean of the three F1 values.
pub fn avg_f1(muc: f64, b_cubed: f64, ceaf_phi4: f64) -> f64 {
    (muc + b_cubed + ceaf_phi4) / 3.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub muc: Prf,
    pub b_cubed: Prf,
    pub ceaf_phi4: Prf,
    pub avg_f1: f64,
}

/// Corpus-level accumulator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Evaluator {
    pub muc: Counts,
    pub b_cubed: Counts,
    pub ceaf_phi4: Counts,
}

impl Evaluator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, gold: &[Cluster], pred: &[Cluster]) {
        self.muc.add(muc_counts(gold, pred));
        self.b_cubed.add(b_cubed_counts(gold, pred));
        self.ceaf_phi4.add(ceaf_phi4_counts(gold, pred));
    }

    pub fn merge(&mut self, other: &Evaluator) {
        self.muc.add(other.muc);
        self.b_cubed.add(other.b_cubed);
        self.ceaf_phi4.add(other.ceaf_phi4);
    }

    pub fn report(&self) -> MetricsReport {
        let (m, b, c) = (self.muc.prf(), self.b_cubed.prf(), self.ceaf_phi4.prf());
        MetricsReport {
            muc: m,
            b_cubed: b,
            ceaf_phi4: c,
            avg_f1: avg_f1(m.f1, b.f1, c.f1),
        }
    }
}

/// Scores one document pair.
pub fn evaluate(gold: &[Cluster], pred: &[Cluster]) -> MetricsReport {
    let mut e = Evaluator::new();
    e.add(gold, pred);
    e.report()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(ids: &[usize]) -> Cluster {
        ids.iter().map(|&i| Span::new(i, i)).collect()
    }

    #[test]
    fn identical_partitions_are_perfect() {
        let gold = vec![c(&[0, 1, 2]), c(&[4, 5])];
        let r = evaluate(&gold, &gold);
        for p in [r.muc, r.b_cubed, r.ceaf_phi4] {
            assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(r.avg_f1, 1.0);
    }

    #[test]
    fn muc_split_chain() {
        let p = muc(&[c(&[0, 1, 2])], &[c(&[0, 1]), c(&[2])]);
        assert_eq!((p.precision, p.recall), (1.0, 0.5));
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let r = evaluate(&[c(&[0, 1])], &[]);
        assert_eq!(r.muc, Prf::default());
        assert_eq!(r.b_cubed.precision, 0.0);
        assert_eq!(r.avg_f1, 0.0);
    }

    #[test]
    fn b_cubed_merged_pairs() {
        let p = b_cubed(&[c(&[0, 1]), c(&[2, 3])], &[c(&[0, 1, 2, 3])]);
        assert_eq!((p.precision, p.recall), (0.5, 1.0));
    }

    #[test]
    fn ceaf_single_pair() {
        let p = ceaf_phi4(&[c(&[0, 1])], &[c(&[0, 2])]);
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn average_of_table_row() {
        // MUC, B-cubed, and CEAF F1 of the best cluster-merging model.
        let avg = avg_f1(85.7, 79.0, 75.9);
        assert!((avg - 80.2).abs() < 0.05);
        assert_eq!(avg_f1(0.0, 0.0, 0.0), 0.0);
        assert_eq!(avg_f1(1.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall() {
        let gold = vec![c(&[0, 1, 2]), c(&[3, 4])];
        let pred = vec![c(&[0, 1]), c(&[2, 3, 4, 6])];
        for (a, b) in [
            (muc_counts(&gold, &pred), muc_counts(&pred, &gold)),
            (b_cubed_counts(&gold, &pred), b_cubed_counts(&pred, &gold)),
            (ceaf_phi4_counts(&gold, &pred), ceaf_phi4_counts(&pred, &gold)),
        ] {
            assert_eq!(a.swapped(), b);
        }
    }
}
