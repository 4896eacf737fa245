use crate::error::Result;
use crate::nn::{Ffnn, ParamStore, Tape, Var};
use crate::ranker::link_components;

/// Hard clusters of the current decisions, singletons included.
pub fn refinement_clusters(decisions: &[Option<usize>]) -> Vec<Vec<usize>> {
    link_components(decisions)
}

/// Span clustering: each span receives the attention-pooled vector of its
/// hard cluster. Cluster assignment is fixed, so gradients reach only the
/// attention network and the pooled span vectors.
pub fn span_clustering(tape: &mut Tape, store: &ParamStore, attention: &Ffnn, g: Var, clusters: &[Vec<usize>]) -> Result<Var> {
    let k = tape.value(g).nrows();
    let logits = attention.forward(tape, store, g)?;
    let pooled = tape.group_pool(logits, g, clusters);
    let mut owner = vec![0; k];
    for (i, c) in clusters.iter().enumerate() {
        for &x in c {
            owner[x] = i;
        }
    }
    Ok(tape.gather_rows(pooled, &owner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(zero: bool) -> (ParamStore, Ffnn) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = Ffnn::new(&mut store, "alpha", 2, &[3], 1, &mut rng);
        if zero {
            store.zero_all();
        }
        (store, f)
    }

    #[test]
    fn singleton_keeps_own_vector() {
        let (store, f) = net(false);
        let g = Matrix::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut tape = Tape::new();
        let gv = tape.constant(g.clone());
        let a = span_clustering(&mut tape, &store, &f, gv, &refinement_clusters(&[None, None])).unwrap();
        assert_eq!(tape.value(a), &g);
    }

    #[test]
    fn equal_logits_give_cluster_mean() {
        let (store, f) = net(true);
        let g = Matrix::from_shape_vec((3, 2), vec![1.0, 2.0, 3.0, 4.0, 9.0, 9.0]).unwrap();
        let clusters = refinement_clusters(&[None, Some(0), None]);
        assert_eq!(clusters, vec![vec![0, 1], vec![2]]);
        let mut tape = Tape::new();
        let gv = tape.constant(g);
        let a = span_clustering(&mut tape, &store, &f, gv, &clusters).unwrap();
        let a = tape.value(a);
        assert_eq!(a.row(0).to_vec(), vec![2.0, 3.0]);
        assert_eq!(a.row(1).to_vec(), vec![2.0, 3.0]);
        assert_eq!(a.row(2).to_vec(), vec![9.0, 9.0]);
    }
}
