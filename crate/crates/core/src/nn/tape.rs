//! Eager reverse-mode differentiation over dense `f64` matrices.
//!
//! Every operation computes its value immediately and records how to push
//! gradients back to its inputs. Values are always 2-D; column vectors are
//! `n x 1`. The op set is fixed to what the coreference graphs need, including
//! a few fused ops (grouped attention pooling, weighted gathers, and the entity
//! membership recursion) whose backward passes are written by hand so the
//! memory they use stays proportional to their outputs.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};

pub type Matrix = Array2<f64>;
pub type Mask = Array2<bool>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Param(#[allow(dead_code)] ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Relu(Var),
    Sigmoid(Var),
    Dropout(Var, Matrix),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    RowDot(Var, Var),
    Sum(Var),
    MaskedSoftmax(Var, Mask),
    MaskedLogSumExp(Var, Mask),
    ScatterFrame(Var, Vec<(usize, usize)>),
    AddAt(Var, Var, Vec<(usize, usize)>),
    GroupPool {
        logits: Var,
        src: Var,
        groups: Vec<Vec<usize>>,
        weights: Vec<Vec<f64>>,
    },
    GroupMean(Var, Vec<Vec<usize>>),
    /// Source row of every output cell.
    GroupMax(Var, Vec<Vec<usize>>),
    WeightedGather {
        weights: Var,
        src: Var,
        index: Vec<Vec<Option<usize>>>,
    },
    Membership {
        probs: Var,
        candidates: Vec<Vec<usize>>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::OneMinus(_) => "one_minus",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Dropout(..) => "dropout",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::RowDot(..) => "row_dot",
            Op::Sum(_) => "sum",
            Op::MaskedSoftmax(..) => "masked_softmax",
            Op::MaskedLogSumExp(..) => "masked_logsumexp",
            Op::ScatterFrame(..) => "scatter_frame",
            Op::AddAt(..) => "add_at",
            Op::GroupPool { .. } => "group_pool",
            Op::GroupMean(..) => "group_mean",
            Op::GroupMax(..) => "group_max",
            Op::WeightedGather { .. } => "weighted_gather",
            Op::Membership { .. } => "membership",
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
}

/// A recording of one forward computation.
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    dropout: Option<(f64, ChaCha8Rng)>,
    cells: usize,
    first_non_finite: Option<usize>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// Evaluation tape: dropout is the identity.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            dropout: None,
            cells: 0,
            first_non_finite: None,
        }
    }

    /// Training tape: `dropout` draws its masks from `rng`.
    pub fn training(rate: f64, rng: ChaCha8Rng) -> Self {
        let mut tape = Self::new();
        if rate > 0.0 {
            tape.dropout = Some((rate, rng));
        }
        tape
    }

    pub fn is_training(&self) -> bool {
        self.dropout.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of `f64` cells held by recorded values and saved buffers.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// Name of the first op that produced a NaN or infinity, if any.
    pub fn non_finite_op(&self) -> Option<&'static str> {
        self.first_non_finite.map(|i| self.nodes[i].op.name())
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let idx = self.nodes.len();
        self.cells += value.len();
        if self.first_non_finite.is_none() && !value.iter().all(|x| x.is_finite()) {
            self.first_non_finite = Some(idx);
        }
        self.nodes.push(Node { value, op });
        Var(idx)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.ncols(), vb.nrows(), "matmul shape mismatch");
        let value = va.dot(vb);
        self.push(value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        assert_eq!(vr.nrows(), 1);
        assert_eq!(va.ncols(), vr.ncols(), "add_row shape mismatch");
        let value = va + vr;
        self.push(value, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| 1.0 - x);
        self.push(value, Op::OneMinus(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    /// Inverted dropout in training mode, identity otherwise.
    pub fn dropout(&mut self, a: Var) -> Var {
        let Some((rate, rng)) = self.dropout.as_mut() else {
            return a;
        };
        let rate = *rate;
        let keep = 1.0 / (1.0 - rate);
        let shape = self.nodes[a.0].value.raw_dim();
        let mask = Matrix::from_shape_simple_fn(shape, || {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        });
        let value = self.value(a) * &mask;
        self.cells += mask.len();
        self.push(value, Op::Dropout(a, mask))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols row mismatch");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows column mismatch");
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), rows);
        self.push(value, Op::GatherRows(a, rows.to_vec()))
    }

    /// `out[i] = sum_j a[i,j] * b[i,j]`, an `n x 1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.dim(), vb.dim(), "row_dot shape mismatch");
        let value = (va * vb).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::RowDot(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::from_elem((1, 1), self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    /// Row-wise softmax over unmasked entries; masked entries are exactly 0.
    ///
    /// Every row must have at least one unmasked entry.
    pub fn masked_softmax(&mut self, a: Var, mask: &Mask) -> Var {
        let value = masked_softmax_rows(self.value(a), mask);
        self.push(value, Op::MaskedSoftmax(a, mask.clone()))
    }

    /// Row-wise log-sum-exp over unmasked entries, an `n x 1` column.
    pub fn masked_logsumexp(&mut self, a: Var, mask: &Mask) -> Var {
        let va = self.value(a);
        assert_eq!(va.dim(), mask.dim());
        let mut value = Matrix::zeros((va.nrows(), 1));
        for (i, (row, m)) in va.outer_iter().zip(mask.outer_iter()).enumerate() {
            value[[i, 0]] = logsumexp(row.iter().zip(m.iter()).filter(|(_, &k)| k).map(|(x, _)| *x));
        }
        self.push(value, Op::MaskedLogSumExp(a, mask.clone()))
    }

    /// Places the entries of an `m x 1` column at `positions` of a zero
    /// `rows x cols` matrix. Positions must be distinct.
    pub fn scatter_frame(&mut self, src: Var, rows: usize, cols: usize, positions: &[(usize, usize)]) -> Var {
        let vs = self.value(src);
        assert_eq!(vs.dim(), (positions.len(), 1));
        let mut value = Matrix::zeros((rows, cols));
        for (i, &(r, c)) in positions.iter().enumerate() {
            value[[r, c]] = vs[[i, 0]];
        }
        self.push(value, Op::ScatterFrame(src, positions.to_vec()))
    }

    /// `base` with the entries of an `m x 1` column added at `positions`.
    pub fn add_at(&mut self, base: Var, src: Var, positions: &[(usize, usize)]) -> Var {
        let vs = self.value(src);
        assert_eq!(vs.dim(), (positions.len(), 1));
        let mut value = self.value(base).clone();
        for (i, &(r, c)) in positions.iter().enumerate() {
            value[[r, c]] += vs[[i, 0]];
        }
        self.push(value, Op::AddAt(base, src, positions.to_vec()))
    }

    /// One output row per group: the softmax(`logits`)-weighted sum of the
    /// group's rows of `src`, with the softmax taken within the group.
    pub fn group_pool(&mut self, logits: Var, src: Var, groups: &[Vec<usize>]) -> Var {
        let (vl, vs) = (self.value(logits), self.value(src));
        assert_eq!(vl.ncols(), 1);
        assert_eq!(vl.nrows(), vs.nrows(), "group_pool shape mismatch");
        let mut value = Matrix::zeros((groups.len(), vs.ncols()));
        let mut weights = Vec::with_capacity(groups.len());
        for (g, members) in groups.iter().enumerate() {
            assert!(!members.is_empty(), "empty pooling group");
            let w = softmax_of(members.iter().map(|&t| vl[[t, 0]]));
            let mut out = value.row_mut(g);
            for (&t, &wt) in members.iter().zip(&w) {
                out.scaled_add(wt, &vs.row(t));
            }
            weights.push(w);
        }
        self.cells += weights.iter().map(Vec::len).sum::<usize>();
        self.push(
            value,
            Op::GroupPool {
                logits,
                src,
                groups: groups.to_vec(),
                weights,
            },
        )
    }

    /// One output row per group: the mean of the group's rows of `src`.
    pub fn group_mean(&mut self, src: Var, groups: &[Vec<usize>]) -> Var {
        let vs = self.value(src);
        let mut value = Matrix::zeros((groups.len(), vs.ncols()));
        for (g, members) in groups.iter().enumerate() {
            assert!(!members.is_empty(), "empty pooling group");
            let mut out = value.row_mut(g);
            for &t in members {
                out += &vs.row(t);
            }
            out /= members.len() as f64;
        }
        self.push(value, Op::GroupMean(src, groups.to_vec()))
    }

    /// One output row per group: the element-wise maximum of the group's rows
    /// of `src`. Gradients go to the first row holding each maximum.
    pub fn group_max(&mut self, src: Var, groups: &[Vec<usize>]) -> Var {
        let vs = self.value(src);
        let d = vs.ncols();
        let mut value = Matrix::zeros((groups.len(), d));
        let mut argmax = Vec::with_capacity(groups.len());
        for (g, members) in groups.iter().enumerate() {
            assert!(!members.is_empty(), "empty pooling group");
            let rows: Vec<usize> = (0..d)
                .map(|c| {
                    members
                        .iter()
                        .copied()
                        .fold(members[0], |best, t| if vs[[t, c]] > vs[[best, c]] { t } else { best })
                })
                .collect();
            for (c, &t) in rows.iter().enumerate() {
                value[[g, c]] = vs[[t, c]];
            }
            argmax.push(rows);
        }
        self.cells += groups.len() * d;
        self.push(value, Op::GroupMax(src, argmax))
    }

    /// `out[x] = sum_j weights[x,j] * src[index[x][j]]`; `None` entries are skipped.
    pub fn weighted_gather(&mut self, weights: Var, src: Var, index: &[Vec<Option<usize>>]) -> Var {
        let (vw, vs) = (self.value(weights), self.value(src));
        assert_eq!(vw.nrows(), index.len());
        let mut value = Matrix::zeros((index.len(), vs.ncols()));
        for (x, cols) in index.iter().enumerate() {
            let mut out = value.row_mut(x);
            for (j, idx) in cols.iter().enumerate() {
                if let Some(y) = *idx {
                    out.scaled_add(vw[[x, j]], &vs.row(y));
                }
            }
        }
        self.push(
            value,
            Op::WeightedGather {
                weights,
                src,
                index: index.to_vec(),
            },
        )
    }

    /// Soft entity membership from a `k x (1 + C)` antecedent distribution.
    ///
    /// Column 0 of `probs` is the dummy antecedent; column `j + 1` of row `x`
    /// is candidate `candidates[x][j] < x`. The result `Q` is `k x k` with
    /// `Q[x][x] = P(dummy)` and `Q[x][e] = sum_j P(x, j) * Q[cand_j][e]` for
    /// `e < x`, i.e. the solution of `Q = L Q + D` for strictly lower `L`.
    pub fn membership(&mut self, probs: Var, candidates: &[Vec<usize>]) -> Var {
        let vp = self.value(probs);
        let k = candidates.len();
        assert_eq!(vp.nrows(), k);
        let mut q = Matrix::zeros((k, k));
        for x in 0..k {
            q[[x, x]] = vp[[x, 0]];
            for (j, &y) in candidates[x].iter().enumerate() {
                assert!(y < x, "membership candidate must precede the span");
                let p = vp[[x, j + 1]];
                if p != 0.0 {
                    let (head, mut tail) = q.view_mut().split_at(Axis(0), x);
                    tail.row_mut(0).slice_mut(s![..=y]).scaled_add(p, &head.row(y).slice(s![..=y]));
                }
            }
        }
        self.push(
            q,
            Op::Membership {
                probs,
                candidates: candidates.to_vec(),
            },
        )
    }

    /// Reverse pass from a `1 x 1` output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).dim(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::ones((1, 1)));
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients {
            nodes: grads,
            params: self.params.clone(),
        }
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let ga = g.dot(&self.value(*b).t());
                let gb = self.value(*a).t().dot(g);
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Transpose(a) => accumulate(grads, *a, g.t().to_owned()),
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g * self.value(*b));
                accumulate(grads, *b, g * self.value(*a));
            }
            Op::Scale(a, c) => accumulate(grads, *a, g * *c),
            Op::OneMinus(a) => accumulate(grads, *a, -g),
            Op::Relu(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga)
                    .and(self.value(*a))
                    .for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = Zip::from(g).and(&node.value).map_collect(|&d, &y| d * y * (1.0 - y));
                accumulate(grads, *a, ga);
            }
            Op::Dropout(a, mask) => accumulate(grads, *a, g * mask),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).ncols();
                    accumulate(grads, *p, g.slice(s![.., offset..offset + w]).to_owned());
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let h = self.value(*p).nrows();
                    accumulate(grads, *p, g.slice(s![offset..offset + h, ..]).to_owned());
                    offset += h;
                }
            }
            Op::GatherRows(a, rows) => {
                let mut ga = Matrix::zeros(self.value(*a).raw_dim());
                for (i, &r) in rows.iter().enumerate() {
                    let mut dst = ga.row_mut(r);
                    dst += &g.row(i);
                }
                accumulate(grads, *a, ga);
            }
            Op::RowDot(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let col = g.column(0).insert_axis(Axis(1));
                accumulate(grads, *a, vb * &col);
                accumulate(grads, *b, va * &col);
            }
            Op::Sum(a) => {
                let d = g[[0, 0]];
                accumulate(grads, *a, Matrix::from_elem(self.value(*a).raw_dim(), d));
            }
            Op::MaskedSoftmax(a, mask) => {
                let y = &node.value;
                let mut ga = Matrix::zeros(y.raw_dim());
                for i in 0..y.nrows() {
                    let dot: f64 = (0..y.ncols()).map(|j| y[[i, j]] * g[[i, j]]).sum();
                    for j in 0..y.ncols() {
                        if mask[[i, j]] {
                            ga[[i, j]] = y[[i, j]] * (g[[i, j]] - dot);
                        }
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::MaskedLogSumExp(a, mask) => {
                let va = self.value(*a);
                let mut ga = Matrix::zeros(va.raw_dim());
                for i in 0..va.nrows() {
                    let lse = node.value[[i, 0]];
                    for j in 0..va.ncols() {
                        if mask[[i, j]] {
                            ga[[i, j]] = g[[i, 0]] * (va[[i, j]] - lse).exp();
                        }
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::ScatterFrame(src, positions) => {
                let gs = Matrix::from_shape_fn((positions.len(), 1), |(i, _)| {
                    let (r, c) = positions[i];
                    g[[r, c]]
                });
                accumulate(grads, *src, gs);
            }
            Op::AddAt(base, src, positions) => {
                accumulate(grads, *base, g.clone());
                let gs = Matrix::from_shape_fn((positions.len(), 1), |(i, _)| {
                    let (r, c) = positions[i];
                    g[[r, c]]
                });
                accumulate(grads, *src, gs);
            }
            Op::GroupMean(src, groups) => {
                let mut gs = Matrix::zeros(self.value(*src).raw_dim());
                for (i, members) in groups.iter().enumerate() {
                    let share = g.row(i).mapv(|v| v / members.len() as f64);
                    for &t in members {
                        let mut row = gs.row_mut(t);
                        row += &share;
                    }
                }
                accumulate(grads, *src, gs);
            }
            Op::GroupMax(src, argmax) => {
                let mut gs = Matrix::zeros(self.value(*src).raw_dim());
                for (i, rows) in argmax.iter().enumerate() {
                    for (c, &t) in rows.iter().enumerate() {
                        gs[[t, c]] += g[[i, c]];
                    }
                }
                accumulate(grads, *src, gs);
            }
            Op::GroupPool {
                logits,
                src,
                groups,
                weights,
            } => {
                let vs = self.value(*src);
                let mut gl = Matrix::zeros((vs.nrows(), 1));
                let mut gsrc = Matrix::zeros(vs.raw_dim());
                for (gi, members) in groups.iter().enumerate() {
                    let dout = g.row(gi);
                    let pooled = dout.dot(&node.value.row(gi));
                    for (&t, &w) in members.iter().zip(&weights[gi]) {
                        gsrc.row_mut(t).scaled_add(w, &dout);
                        gl[[t, 0]] += w * (dout.dot(&vs.row(t)) - pooled);
                    }
                }
                accumulate(grads, *logits, gl);
                accumulate(grads, *src, gsrc);
            }
            Op::WeightedGather {
                weights,
                src,
                index,
            } => {
                let (vw, vs) = (self.value(*weights), self.value(*src));
                let mut gw = Matrix::zeros(vw.raw_dim());
                let mut gsrc = Matrix::zeros(vs.raw_dim());
                for (x, cols) in index.iter().enumerate() {
                    let dout = g.row(x);
                    for (j, idx) in cols.iter().enumerate() {
                        if let Some(y) = *idx {
                            gw[[x, j]] = dout.dot(&vs.row(y));
                            gsrc.row_mut(y).scaled_add(vw[[x, j]], &dout);
                        }
                    }
                }
                accumulate(grads, *weights, gw);
                accumulate(grads, *src, gsrc);
            }
            Op::Membership { probs, candidates } => {
                // Q = (I - L)^-1 D, so with M = (I - L)^-T dQ:
                // dL = M Q^T on the candidate pattern and dD = diag(M).
                let vp = self.value(*probs);
                let q = &node.value;
                let k = candidates.len();
                let mut m = g.clone();
                for z in (0..k).rev() {
                    for (j, &y) in candidates[z].iter().enumerate() {
                        let p = vp[[z, j + 1]];
                        if p != 0.0 {
                            let (mut head, tail) = m.view_mut().split_at(Axis(0), z);
                            head.row_mut(y).scaled_add(p, &tail.row(0));
                        }
                    }
                }
                let mut gp = Matrix::zeros(vp.raw_dim());
                for x in 0..k {
                    gp[[x, 0]] = m[[x, x]];
                    for (j, &y) in candidates[x].iter().enumerate() {
                        gp[[x, j + 1]] = m.row(x).slice(s![..=y]).dot(&q.row(y).slice(s![..=y]));
                    }
                }
                accumulate(grads, *probs, gp);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    nodes: Vec<Option<Matrix>>,
    params: HashMap<ParamId, Var>,
}

impl Gradients {
    /// Gradient with respect to any recorded node (zero-shaped `None` if unreached).
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.params.get(&id).and_then(|&v| self.wrt(v))
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.params.iter().filter_map(|(&id, &v)| self.wrt(v).map(|g| (id, g)))
    }

    /// Parameter gradients, moved out without copying.
    pub fn into_params(mut self) -> HashMap<ParamId, Matrix> {
        self.params
            .iter()
            .filter_map(|(&id, &v)| self.nodes[v.0].take().map(|g| (id, g)))
            .collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted log-sum-exp; `-inf` for an empty sequence.
pub fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn softmax_of(xs: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn masked_softmax_rows(a: &Matrix, mask: &Mask) -> Matrix {
    assert_eq!(a.dim(), mask.dim(), "mask shape mismatch");
    let mut out = Matrix::zeros(a.raw_dim());
    for i in 0..a.nrows() {
        let max = (0..a.ncols())
            .filter(|&j| mask[[i, j]])
            .map(|j| a[[i, j]])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max > f64::NEG_INFINITY, "softmax row {i} is fully masked");
        let mut total = 0.0;
        for j in 0..a.ncols() {
            if mask[[i, j]] {
                let e = (a[[i, j]] - max).exp();
                out[[i, j]] = e;
                total += e;
            }
        }
        out.row_mut(i).mapv_inplace(|e| e / total);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_relative_error, numeric_gradient};
    use ndarray::array;
    use rand::SeedableRng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    /// Compares the tape gradient for every input against central differences
    /// of `f`, which must build a scalar from the given leaves.
    fn check(inputs: Vec<Matrix>, f: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.constant(m.clone())).collect();
        let out = f(&mut tape, &vars);
        let grads = tape.backward(out);
        for (i, input) in inputs.iter().enumerate() {
            let numeric = numeric_gradient(input, 1e-5, |perturbed| {
                let mut t = Tape::new();
                let vs: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, m)| t.constant(if i == j { perturbed.clone() } else { m.clone() }))
                    .collect();
                let o = f(&mut t, &vs);
                t.scalar(o)
            });
            let zeros = Matrix::zeros(input.raw_dim());
            let analytic = grads.wrt(vars[i]).unwrap_or(&zeros);
            let err = max_relative_error(analytic, &numeric, 1e-7);
            assert!(err <= 1e-3, "input {i}: relative error {err}");
        }
    }

    #[test]
    fn linear_layer_matches_hand_multiplication() {
        let mut tape = Tape::new();
        let w = tape.constant(array![[1.0, 2.0], [3.0, 4.0]]);
        let x = tape.constant(array![[5.0, 6.0]]);
        let y = tape.matmul(x, w);
        assert_eq!(tape.value(y), &array![[23.0, 34.0]]);
    }

    #[test]
    fn elementwise_ops_pass_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = vec![random(3, 4, &mut rng), random(3, 4, &mut rng), random(1, 4, &mut rng)];
        check(inputs, |t, v| {
            let a = t.mul(v[0], v[1]);
            let b = t.add_row(a, v[2]);
            let c = t.sigmoid(b);
            let d = t.one_minus(c);
            let e = t.sub(d, v[0]);
            let f = t.relu(e);
            let g = t.scale(f, 1.7);
            let h = t.add(g, c);
            t.sum(h)
        });
    }

    #[test]
    fn matmul_concat_gather_pass_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs = vec![random(4, 3, &mut rng), random(2, 5, &mut rng), random(4, 2, &mut rng)];
        check(inputs, |t, v| {
            let tr = t.transpose(v[1]);
            let wide = t.concat_cols(&[v[0], v[2]]);
            let tall = t.concat_rows(&[wide, wide]);
            let picked = t.gather_rows(tall, &[3, 0, 4, 7]);
            let prod = t.matmul(picked, tr);
            let sq = t.mul(prod, prod);
            let rd = t.row_dot(prod, sq);
            t.sum(rd)
        });
    }

    #[test]
    fn masked_softmax_and_logsumexp_pass_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mask = array![[true, false, true, true], [true, true, false, false], [true, false, false, false]];
        let gold = array![[false, false, true, true], [true, false, false, false], [true, false, false, false]];
        let inputs = vec![random(3, 4, &mut rng), random(3, 4, &mut rng)];
        check(inputs, move |t, v| {
            let p = t.masked_softmax(v[0], &mask);
            let weighted = t.mul(p, v[1]);
            let all = t.masked_logsumexp(v[0], &mask);
            let good = t.masked_logsumexp(v[0], &gold);
            let diff = t.sub(all, good);
            let a = t.sum(diff);
            let b = t.sum(weighted);
            t.add(a, b)
        });
    }

    #[test]
    fn scatter_and_add_at_pass_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inputs = vec![random(3, 1, &mut rng), random(2, 3, &mut rng), random(2, 1, &mut rng)];
        check(inputs, |t, v| {
            let frame = t.scatter_frame(v[0], 2, 3, &[(0, 1), (1, 0), (1, 2)]);
            let both = t.add(frame, v[1]);
            let bumped = t.add_at(both, v[2], &[(0, 0), (0, 1)]);
            let sq = t.mul(bumped, bumped);
            t.sum(sq)
        });
    }

    #[test]
    fn group_reductions_pass_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let groups = vec![vec![0, 2, 3], vec![1], vec![1, 4]];
        check(vec![random(5, 3, &mut rng), random(3, 3, &mut rng)], |t, v| {
            let mean = t.group_mean(v[0], &groups);
            let max = t.group_max(v[0], &groups);
            let both = t.add(mean, max);
            let weighted = t.mul(both, v[1]);
            t.sum(weighted)
        });
    }

    #[test]
    fn group_max_takes_elementwise_maximum() {
        let mut tape = Tape::new();
        let src = tape.constant(array![[1.0, 5.0], [3.0, 2.0], [0.0, 0.0]]);
        let max = tape.group_max(src, &[vec![0, 1], vec![2]]);
        assert_eq!(tape.value(max), &array![[3.0, 5.0], [0.0, 0.0]]);
        let mean = tape.group_mean(src, &[vec![0, 1]]);
        assert_eq!(tape.value(mean), &array![[2.0, 3.5]]);
    }

    #[test]
    fn group_pool_and_weighted_gather_pass_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let groups = vec![vec![0, 1, 2], vec![3], vec![1, 3, 4]];
        let index = vec![vec![None, Some(1)], vec![Some(0), Some(2)], vec![Some(2), None]];
        let inputs = vec![
            random(5, 1, &mut rng),
            random(5, 3, &mut rng),
            random(3, 2, &mut rng),
            random(3, 3, &mut rng),
        ];
        check(inputs, move |t, v| {
            let pooled = t.group_pool(v[0], v[1], &groups);
            let gathered = t.weighted_gather(v[2], pooled, &index);
            let prod = t.mul(gathered, v[3]);
            let sq = t.mul(prod, pooled);
            t.sum(sq)
        });
    }

    #[test]
    fn membership_passes_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Row x: column 0 is the dummy, then candidates in `cands[x]`.
        let cands = vec![vec![], vec![0], vec![1, 0], vec![2, 0], vec![3, 2, 1]];
        let mut mask = Mask::from_elem((5, 4), false);
        for (x, c) in cands.iter().enumerate() {
            for j in 0..=c.len() {
                mask[[x, j]] = true;
            }
        }
        let inputs = vec![random(5, 4, &mut rng), random(5, 5, &mut rng)];
        check(inputs, move |t, v| {
            let p = t.masked_softmax(v[0], &mask);
            let q = t.membership(p, &cands);
            let w = t.mul(q, v[1]);
            let qt = t.transpose(q);
            let qq = t.matmul(q, qt);
            let a = t.sum(w);
            let b = t.sum(qq);
            t.add(a, b)
        });
    }

    #[test]
    fn dropout_identity_at_eval_and_rate_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[1.0, -2.0]]);
        assert_eq!(tape.dropout(x), x);
        let mut train = Tape::training(0.0, ChaCha8Rng::seed_from_u64(0));
        let y = train.constant(array![[1.0, -2.0]]);
        assert_eq!(train.dropout(y), y);
    }

    #[test]
    fn dropout_scales_kept_units() {
        let mut tape = Tape::training(0.5, ChaCha8Rng::seed_from_u64(9));
        let x = tape.constant(Matrix::ones((1, 200)));
        let y = tape.dropout(x);
        assert!(tape.value(y).iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(tape.value(y).iter().any(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_values_are_flagged() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[1.0]]);
        assert!(tape.non_finite_op().is_none());
        let _ = tape.scale(x, f64::INFINITY);
        assert_eq!(tape.non_finite_op(), Some("scale"));
    }
}
