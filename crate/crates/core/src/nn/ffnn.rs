use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Feedforward network: rectified hidden layers with dropout, then a linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct Ffnn {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<(ParamId, ParamId)>,
}

impl Ffnn {
    /// Registers the network's weights under `name`.
    ///
    /// `hidden` lists the hidden layer widths; an empty list gives a single
    /// linear map from input to output.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let weight = store.glorot(format!("{name}.{i}.weight"), w[0], w[1], rng);
                let bias = store.zeros(format!("{name}.{i}.bias"), 1, w[1]);
                (weight, bias)
            })
            .collect();
        Self {
            input_dim,
            output_dim,
            layers,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }

    /// Maps each row of `input` to `output_dim` scores.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, input: Var) -> Result<Var> {
        let cols = tape.value(input).ncols();
        if cols != self.input_dim {
            return Err(Error::dim("ffnn input", self.input_dim, cols));
        }
        let mut h = input;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            let z = tape.matmul(h, wv);
            h = tape.add_row(z, bv);
            if i < last {
                h = tape.relu(h);
                h = tape.dropout(h);
            }
        }
        Ok(h)
    }
}

/// Learned interpolation `g' = f * g + (1 - f) * a`, `f = sigmoid([g, a] W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    dim: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Gate {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = store.glorot(format!("{name}.weight"), 2 * dim, dim, rng);
        let bias = store.zeros(format!("{name}.bias"), 1, dim);
        Self { dim, weight, bias }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    /// Saturates the gate so that `f == 1.0` exactly and the update returns `g`.
    pub fn force_open(&self, store: &mut ParamStore) {
        store.value_mut(self.weight).fill(0.0);
        store.value_mut(self.bias).fill(50.0);
    }

    /// Gate activations `f` for rows `g` and `a`.
    pub fn activation(&self, tape: &mut Tape, store: &ParamStore, g: Var, a: Var) -> Result<Var> {
        let (gd, ad) = (tape.value(g).dim(), tape.value(a).dim());
        if gd.1 != self.dim {
            return Err(Error::dim("gate input", self.dim, gd.1));
        }
        if gd != ad {
            return Err(Error::dim("gate refined input", gd.1, ad.1));
        }
        let both = tape.concat_cols(&[g, a]);
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let z = tape.matmul(both, w);
        let z = tape.add_row(z, b);
        Ok(tape.sigmoid(z))
    }

    pub fn update(&self, tape: &mut Tape, store: &ParamStore, g: Var, a: Var) -> Result<Var> {
        let f = self.activation(tape, store, g, a)?;
        let kept = tape.mul(f, g);
        let rest = tape.one_minus(f);
        let mixed = tape.mul(rest, a);
        Ok(tape.add(kept, mixed))
    }
}
