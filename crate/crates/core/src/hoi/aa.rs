use crate::nn::{Matrix, Tape, Var};
use crate::ranker::AntecedentFrame;

/// Source rows for each frame cell; the dummy column points at the span itself.
fn attended_index(frame: &AntecedentFrame) -> Vec<Vec<Option<usize>>> {
    (0..frame.len())
        .map(|x| {
            let mut row = Vec::with_capacity(frame.width());
            row.push(Some(x));
            row.extend(frame.candidates[x].iter().map(|&y| Some(y)));
            row.resize(frame.width(), None);
            row
        })
        .collect()
}

/// Attended antecedent: `a_x = P(eps) g_x + sum_y P(y) g_y`.
pub fn attended_antecedent(tape: &mut Tape, probs: Var, g: Var, frame: &AntecedentFrame) -> Var {
    tape.weighted_gather(probs, g, &attended_index(frame))
}

/// Plain-value form of [`attended_antecedent`].
pub fn attended_antecedent_values(probs: &Matrix, g: &Matrix, frame: &AntecedentFrame) -> Matrix {
    let mut out = Matrix::zeros(g.dim());
    for (x, idx) in attended_index(frame).iter().enumerate() {
        for (j, y) in idx.iter().enumerate() {
            if let Some(y) = *y {
                out.row_mut(x).scaled_add(probs[[x, j]], &g.row(y));
            }
        }
    }
    out
}
