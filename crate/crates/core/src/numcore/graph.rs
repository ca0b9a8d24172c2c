//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only list of nodes. Every operation appends one
//! node whose inputs are already present, so the node list is a topological
//! order by construction and [`Graph::backward`] simply walks it in reverse.
//! Graphs are built fresh for every forward pass and dropped afterwards.

use std::sync::Arc;

use super::tensor::{self, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    TileRows(Var),
    Gather(Var, Vec<usize>),
    Softmax(Var),
    CrossEntropy(Var, Vec<usize>),
    Scale(Var, F),
    Sum(Var),
}

#[derive(Debug)]
struct Node<F> {
    op: Op<F>,
    value: Arc<Tensor<F>>,
}

/// The recorded computation.
#[derive(Debug, Default)]
pub struct Graph<F: Scalar = f32> {
    nodes: Vec<Node<F>>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients<F: Scalar> {
    grads: Vec<Option<Tensor<F>>>,
    shapes: Vec<Vec<usize>>,
}

impl<F: Scalar> Gradients<F> {
    /// Gradient of the loss with respect to `v`; zeros if `v` did not
    /// contribute to the loss.
    pub fn wrt(&self, v: Var) -> Tensor<F> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Move the gradient out, leaving zeros semantics for later calls.
    pub fn take(&mut self, v: Var) -> Tensor<F> {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>) -> Var {
        self.nodes.push(Node {
            op,
            value: Arc::new(value),
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "variable {} does not belong to this graph ({} nodes)",
                v.0,
                self.nodes.len()
            )))
        }
    }

    /// Register an input or parameter.
    pub fn leaf(&mut self, value: Tensor<F>) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Register a shared tensor (typically a model parameter) without copying.
    pub fn leaf_shared(&mut self, value: Arc<Tensor<F>>) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = self.value(a).mul(self.value(b))?;
        Ok(self.push(Op::Mul(a, b), out))
    }

    /// `a + bias` with the rank-1 `bias` repeated over every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.check(a)?;
        self.check(bias)?;
        let out = self.value(a).add_bias(self.value(bias))?;
        Ok(self.push(Op::AddBias(a, bias), out))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).sigmoid();
        Ok(self.push(Op::Sigmoid(a), out))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).tanh();
        Ok(self.push(Op::Tanh(a), out))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        let vals: Vec<&Tensor<F>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = tensor::concat_last(&vals)?;
        Ok(self.push(Op::Concat(parts.to_vec()), out))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        let vals: Vec<&Tensor<F>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = tensor::stack_rows(&vals)?;
        Ok(self.push(Op::StackRows(parts.to_vec()), out))
    }

    /// Repeat a single row (`[n]` or `[1×n]`) `times` times into `[times×n]`.
    pub fn tile_rows(&mut self, a: Var, times: usize) -> Result<Var> {
        self.check(a)?;
        let v = self.value(a);
        if v.rows() != 1 || v.rank() == 0 || times == 0 {
            return Err(Error::dim("tile_rows", v.shape(), &[times]));
        }
        let n = v.cols();
        let mut data = Vec::with_capacity(n * times);
        for _ in 0..times {
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(vec![times, n], data)?;
        Ok(self.push(Op::TileRows(a), out))
    }

    /// Rows of a `[V×E]` table selected by `indices`, as `[len×E]`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        self.check(table)?;
        let t = self.value(table);
        if t.rank() != 2 || indices.is_empty() {
            return Err(Error::dim("gather", t.shape(), &[indices.len()]));
        }
        let (v, e) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(indices.len() * e);
        for &i in indices {
            if i >= v {
                return Err(Error::Index { index: i, bound: v });
            }
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::new(vec![indices.len(), e], data)?;
        Ok(self.push(Op::Gather(table, indices.to_vec()), out))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let v = self.value(a);
        if v.rank() == 0 {
            return Err(Error::dim("softmax", v.shape(), &[1]));
        }
        let out = v.softmax();
        Ok(self.push(Op::Softmax(a), out))
    }

    /// Mean over rows of `-log softmax(logits)[row, target]`; a scalar.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        self.check(logits)?;
        let l = self.value(logits);
        if l.rank() != 2 || l.rows() != targets.len() || targets.is_empty() {
            return Err(Error::dim("cross_entropy", l.shape(), &[targets.len()]));
        }
        let vocab = l.cols();
        let mut total = F::zero();
        for (r, &t) in targets.iter().enumerate() {
            if t >= vocab {
                return Err(Error::Index {
                    index: t,
                    bound: vocab,
                });
            }
            let row = l.row_slice(r);
            total += tensor::log_sum_exp(row) - row[t];
        }
        let out = Tensor::scalar(total / F::from_f64(targets.len() as f64));
        Ok(self.push(Op::CrossEntropy(logits, targets.to_vec()), out))
    }

    pub fn scale(&mut self, a: Var, factor: F) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| x * factor);
        Ok(self.push(Op::Scale(a, factor), out))
    }

    /// Sum of all elements; a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s: F = self.value(a).data().iter().copied().sum();
        Ok(self.push(Op::Sum(a), Tensor::scalar(s)))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        self.check(loss)?;
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut seed = Tensor::zeros(self.shape(loss));
        seed.data_mut()[0] = F::one();
        grads[loss.0] = Some(seed);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, g: &Tensor<F>, grads: &mut [Option<Tensor<F>>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = g.matmul_nt(self.value(*b))?;
                let db = self.value(*a).matmul_tn(g)?;
                accumulate(grads, *a, da)?;
                accumulate(grads, *b, db)?;
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.map(|x| -x))?;
            }
            Op::Mul(a, b) => {
                let da = g.mul(self.value(*b))?;
                let db = g.mul(self.value(*a))?;
                accumulate(grads, *a, da)?;
                accumulate(grads, *b, db)?;
            }
            Op::AddBias(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.sum_rows())?;
            }
            Op::Sigmoid(a) => {
                let s = &node.value;
                let d = g.mul(&s.map(|s| s * (F::one() - s)))?;
                accumulate(grads, *a, d)?;
            }
            Op::Tanh(a) => {
                let t = &node.value;
                let d = g.mul(&t.map(|t| F::one() - t * t))?;
                accumulate(grads, *a, d)?;
            }
            Op::Concat(parts) => {
                let total = g.cols();
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let w = pv.cols();
                    let mut data = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        let row = &g.data()[r * total..(r + 1) * total];
                        data.extend_from_slice(&row[offset..offset + w]);
                    }
                    offset += w;
                    accumulate(grads, p, Tensor::new(pv.shape().to_vec(), data)?)?;
                }
            }
            Op::StackRows(parts) => {
                let cols = g.cols();
                let mut start = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let n = pv.len();
                    let data = g.data()[start..start + n].to_vec();
                    start += n;
                    debug_assert_eq!(n % cols, 0);
                    accumulate(grads, p, Tensor::new(pv.shape().to_vec(), data)?)?;
                }
            }
            Op::TileRows(a) => {
                let av = self.value(*a);
                let summed = g.sum_rows().into_data();
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), summed)?)?;
            }
            Op::Gather(table, indices) => {
                let tv = self.value(*table);
                let e = tv.cols();
                let mut d = Tensor::zeros(tv.shape());
                for (r, &i) in indices.iter().enumerate() {
                    let src = &g.data()[r * e..(r + 1) * e];
                    let dst = &mut d.data_mut()[i * e..(i + 1) * e];
                    for (o, &x) in dst.iter_mut().zip(src) {
                        *o += x;
                    }
                }
                accumulate(grads, *table, d)?;
            }
            Op::Softmax(a) => {
                let s = &node.value;
                let c = s.cols();
                let mut d = Tensor::zeros(s.shape());
                for ((drow, srow), grow) in d
                    .data_mut()
                    .chunks_mut(c)
                    .zip(s.data().chunks(c))
                    .zip(g.data().chunks(c))
                {
                    let dot: F = srow.iter().zip(grow).map(|(&s, &g)| s * g).sum();
                    for ((o, &s), &g) in drow.iter_mut().zip(srow).zip(grow) {
                        *o = s * (g - dot);
                    }
                }
                accumulate(grads, *a, d)?;
            }
            Op::CrossEntropy(logits, targets) => {
                let l = self.value(*logits);
                let mut d = l.softmax();
                let c = d.cols();
                let scale = g.item() / F::from_f64(targets.len() as f64);
                for (r, &t) in targets.iter().enumerate() {
                    let row = &mut d.data_mut()[r * c..(r + 1) * c];
                    row[t] -= F::one();
                    for x in row.iter_mut() {
                        *x *= scale;
                    }
                }
                accumulate(grads, *logits, d)?;
            }
            Op::Scale(a, factor) => {
                let f = *factor;
                accumulate(grads, *a, g.map(|x| x * f))?;
            }
            Op::Sum(a) => {
                let gv = g.item();
                let av = self.value(*a);
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), vec![gv; av.len()])?)?;
            }
        }
        Ok(())
    }
}

fn accumulate<F: Scalar>(grads: &mut [Option<Tensor<F>>], v: Var, d: Tensor<F>) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => {
            *slot = Some(d);
            Ok(())
        }
    }
}
