use crate::nn::{Matrix, Tape, Var};
use crate::ranker::AntecedentFrame;

/// Entity membership `Q` from the antecedent distribution.
///
/// `Q[x][x] = P(eps)` and `Q[x][e] = sum_y P(y) Q[y][e]` over the kept
/// candidates `y` of `x`. Pruned spans carry no mass; because `P` is already
/// normalized over the kept candidates, rows still sum to 1.
pub fn entity_membership(tape: &mut Tape, probs: Var, frame: &AntecedentFrame) -> Var {
    tape.membership(probs, &frame.candidates)
}

/// Plain-value `Q` by direct recursion over earlier rows.
pub fn membership_values(probs: &Matrix, frame: &AntecedentFrame) -> Matrix {
    let k = frame.len();
    let mut q = Matrix::zeros((k, k));
    for x in 0..k {
        q[[x, x]] = probs[[x, 0]];
        for (j, &y) in frame.candidates[x].iter().enumerate() {
            for e in 0..=y {
                q[[x, e]] += probs[[x, j + 1]] * q[[y, e]];
            }
        }
    }
    q
}

/// Attended entity vectors `a_x = sum_{t <= x} (Q Q')[x, t] g_t`.
///
/// Expanding `a_x = sum_e Q[x][e] e_e^(x)` with `e_e^(x) = sum_{t <= x} Q[t][e] g_t`
/// gives this form; the `k x k` product is the quadratic memory cost.
pub fn entity_equalization(tape: &mut Tape, q: Var, g: Var) -> Var {
    let k = tape.value(q).nrows();
    let qt = tape.transpose(q);
    let qq = tape.matmul(q, qt);
    let lower = tape.constant(Matrix::from_shape_fn((k, k), |(x, t)| if t <= x { 1.0 } else { 0.0 }));
    let w = tape.mul(qq, lower);
    tape.matmul(w, g)
}
