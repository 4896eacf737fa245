use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::nn::Matrix;

use super::container::EmbeddingStore;

/// Per-token vectors for one document: an `n_tokens x dim` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenEmbeddings {
    pub doc_key: String,
    pub vectors: Matrix,
}

impl TokenEmbeddings {
    pub fn new(doc_key: impl Into<String>, vectors: Matrix) -> Result<Self> {
        let doc_key = doc_key.into();
        if !vectors.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(format!("embeddings for {doc_key}")));
        }
        if vectors.ncols() == 0 {
            return Err(Error::Argument(format!("embeddings for {doc_key} have dimension 0")));
        }
        Ok(Self { doc_key, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    /// Errors unless there is exactly one vector per document token.
    pub fn check_document(&self, doc: &Document) -> Result<()> {
        if self.len() != doc.num_tokens() {
            return Err(Error::dim(format!("embeddings for {}", doc.doc_key), doc.num_tokens(), self.len()));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Counter-based uniform draw in `[-1, 1)` keyed by `(key, counter)`.
fn uniform(key: u64, counter: u64) -> f64 {
    let bits = splitmix64(key ^ splitmix64(counter));
    (bits >> 11) as f64 * (2.0 / (1u64 << 53) as f64) - 1.0
}

/// Deterministic test embeddings.
///
/// Each entry averages a component keyed by `(seed, token)` and one keyed by
/// `(seed, token, position)`, so repeated words share a direction while
/// every occurrence stays distinct. Entries lie in `[-1, 1]`.
pub fn hash_embeddings(doc: &Document, dim: usize, seed: u64) -> Result<TokenEmbeddings> {
    if dim == 0 {
        return Err(Error::Argument("embedding dimension must be positive".into()));
    }
    let seed_key = splitmix64(seed);
    let tokens: Vec<&str> = doc.tokens().collect();
    let vectors = Matrix::from_shape_fn((tokens.len(), dim), |(t, i)| {
        let word_key = splitmix64(seed_key ^ fnv1a(tokens[t].as_bytes()));
        let position_key = splitmix64(word_key ^ splitmix64(t as u64 ^ 0xA5A5_A5A5));
        0.5 * (uniform(word_key, i as u64) + uniform(position_key, i as u64))
    });
    TokenEmbeddings::new(doc.doc_key.clone(), vectors)
}

/// Source of token embeddings for training and prediction.
pub enum EmbeddingProvider {
    Hash { dim: usize, seed: u64 },
    File(EmbeddingStore),
}

impl EmbeddingProvider {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::Hash { dim, .. } => *dim,
            EmbeddingProvider::File(store) => store.dim(),
        }
    }

    pub fn embed(&self, doc: &Document) -> Result<TokenEmbeddings> {
        let emb = match self {
            EmbeddingProvider::Hash { dim, seed } => hash_embeddings(doc, *dim, *seed)?,
            EmbeddingProvider::File(store) => store.get(&doc.doc_key)?,
        };
        emb.check_document(doc)?;
        Ok(emb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> Document {
        Document::new(
            "nw/t_0",
            vec![
                "the cat saw the dog".split(' ').map(String::from).collect(),
                "the end".split(' ').map(String::from).collect(),
            ],
        )
    }

    #[test]
    fn same_seed_is_deterministic() {
        let a = hash_embeddings(&doc(), 16, 7).unwrap();
        let b = hash_embeddings(&doc(), 16, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.vectors.dim(), (7, 16));
        assert!(a.vectors.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn different_seeds_differ() {
        let d = doc();
        let base = hash_embeddings(&d, 8, 0).unwrap();
        let differing = (1..=100u64)
            .filter(|&s| hash_embeddings(&d, 8, s).unwrap().vectors != base.vectors)
            .count();
        assert_eq!(differing, 100);
    }

    #[test]
    fn repeated_word_is_position_salted() {
        let e = hash_embeddings(&doc(), 8, 3).unwrap();
        assert_ne!(e.vectors.row(0), e.vectors.row(3));
        assert_ne!(e.vectors.row(0), e.vectors.row(5));
    }

    #[test]
    fn zero_dim_is_rejected() {
        assert!(hash_embeddings(&doc(), 0, 0).is_err());
    }

    #[test]
    fn provider_checks_token_count() {
        let provider = EmbeddingProvider::Hash { dim: 4, seed: 1 };
        assert_eq!(provider.embed(&doc()).unwrap().len(), 7);
        let wrong = TokenEmbeddings::new("nw/t_0", Matrix::zeros((3, 4))).unwrap();
        assert!(matches!(wrong.check_document(&doc()), Err(Error::Dimension { .. })));
    }
}
