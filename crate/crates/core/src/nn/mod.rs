//! Dense math, differentiation, and optimization.

pub mod ffnn;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod tape;

pub use ffnn::{Ffnn, Gate};
pub use optim::{clip_global_norm, Adam, AdamConfig, GroupConfig};
pub use params::{Param, ParamGroup, ParamId, ParamStore};
pub use tape::{Gradients, Mask, Matrix, Tape, Var};

use crate::error::{Error, Result};

/// Row softmax with max-subtraction; masked entries are exactly zero.
pub fn softmax(row: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if row.len() != mask.len() {
        return Err(Error::dim("softmax mask", row.len(), mask.len()));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::Argument("softmax over a fully masked row".into()));
    }
    let m = Mask::from_shape_vec((1, mask.len()), mask.to_vec()).expect("shape");
    let a = Matrix::from_shape_vec((1, row.len()), row.to_vec()).expect("shape");
    Ok(tape::masked_softmax_rows(&a, &m).into_raw_vec_and_offset().0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_scores_give_uniform() {
        let p = softmax(&[0.3; 4], &[true; 4]).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn log_three_gives_quarter_and_three_quarters() {
        let p = softmax(&[0.0, 3f64.ln()], &[true, true]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12);
        assert!((p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn masked_entries_are_exactly_zero_and_stable() {
        let p = softmax(&[1000.0, 5.0, 999.0], &[true, false, true]).unwrap();
        assert_eq!(p[1], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p[0] > p[2]);
    }

    #[test]
    fn fully_masked_row_is_an_error() {
        assert!(softmax(&[1.0, 2.0], &[false, false]).is_err());
    }
}
