use crate::corpus::Document;
use crate::nn::{Mask, Matrix, Tape, Var};
use crate::ranker::AntecedentFrame;

/// Cells holding gold antecedents: candidates in the span's gold cluster, or
/// the dummy when the span has none.
pub fn gold_mask(frame: &AntecedentFrame, doc: &Document) -> Mask {
    let gold = doc.mention_to_cluster();
    let cluster: Vec<Option<usize>> = frame.spans.iter().map(|s| gold.get(s).copied()).collect();
    let mut mask = Mask::from_elem((frame.len(), frame.width()), false);
    for x in 0..frame.len() {
        let mut any = false;
        if let Some(c) = cluster[x] {
            for (j, &y) in frame.candidates[x].iter().enumerate() {
                if cluster[y] == Some(c) {
                    mask[[x, j + 1]] = true;
                    any = true;
                }
            }
        }
        mask[[x, 0]] = !any;
    }
    mask
}

/// Negative marginal log-likelihood of the gold antecedents, summed over spans:
/// `sum_x [logsumexp(all valid) - logsumexp(gold)]`.
pub fn marginal_loss(tape: &mut Tape, frame: &AntecedentFrame, scores: Var, doc: &Document) -> Var {
    if frame.is_empty() {
        return tape.constant(Matrix::zeros((1, 1)));
    }
    let all = tape.masked_logsumexp(scores, &frame.mask());
    let gold = tape.masked_logsumexp(scores, &gold_mask(frame, doc));
    let diff = tape.sub(all, gold);
    tape.sum(diff)
}

/// Binary cross-entropy of mention logits against gold membership, summed
/// over spans: `softplus(-z)` for gold mentions and `softplus(z)` otherwise.
pub fn mention_loss(tape: &mut Tape, logits: Var, gold: &[bool]) -> Var {
    let n = gold.len();
    assert_eq!(tape.value(logits).dim(), (n, 1), "one logit per span");
    if n == 0 {
        return tape.constant(Matrix::zeros((1, 1)));
    }
    let signs = tape.constant(Matrix::from_shape_fn((n, 1), |(i, _)| if gold[i] { -1.0 } else { 1.0 }));
    let signed = tape.mul(logits, signs);
    let zeros = tape.constant(Matrix::zeros((n, 1)));
    let pair = tape.concat_cols(&[zeros, signed]);
    let softplus = tape.masked_logsumexp(pair, &Mask::from_elem((n, 2), true));
    tape.sum(softplus)
}
