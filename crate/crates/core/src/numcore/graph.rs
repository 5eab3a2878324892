use std::rc::Rc;
use std::sync::Arc;

use super::kernels::{self as k, ConvGeometry};
use super::{Permutation, Real, Tensor};
use crate::error::{Error, Result};

/// Differentiable operations over some node representation.
///
/// Model code is written once against this trait and runs either on a
/// [`Tape`] (records everything, supports `backward`) or on [`Eager`]
/// (plain evaluation, intermediates freed as soon as they are dropped).
pub trait Graph<T: Real> {
    type Node: Clone;

    /// Non-differentiable input.
    fn constant(&mut self, value: Tensor<T>) -> Self::Node;
    /// Differentiable leaf.
    fn param(&mut self, value: &Tensor<T>) -> Self::Node;
    fn value<'a>(&'a self, node: &'a Self::Node) -> &'a Tensor<T>;
    /// False when nothing is kept for a backward pass, so row-local work may
    /// be split into independent pieces.
    fn retains_intermediates(&self) -> bool {
        true
    }

    fn affine(&mut self, x: &Self::Node, w: &Self::Node, b: Option<&Self::Node>) -> Result<Self::Node>;
    fn layernorm(&mut self, x: &Self::Node, eps: f64) -> Self::Node;
    fn gelu(&mut self, x: &Self::Node) -> Self::Node;
    fn relu(&mut self, x: &Self::Node) -> Self::Node;
    fn sigmoid(&mut self, x: &Self::Node) -> Self::Node;
    fn tanh(&mut self, x: &Self::Node) -> Self::Node;
    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn mul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    /// `x[.., j] * v[j]`.
    fn mul_features(&mut self, x: &Self::Node, v: &Self::Node) -> Result<Self::Node>;
    /// `scale * x + shift`.
    fn scale_shift(&mut self, x: &Self::Node, scale: f64, shift: f64) -> Self::Node;
    fn reshape(&mut self, x: &Self::Node, shape: &[usize]) -> Result<Self::Node>;
    fn permute_seq(&mut self, x: &Self::Node, perm: &Arc<Permutation>) -> Result<Self::Node>;
    fn gather_features(&mut self, x: &Self::Node, idx: &Arc<Permutation>) -> Result<Self::Node>;
    fn concat_features(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn embedding(&mut self, table: &Self::Node, ids: &[usize], shape: &[usize]) -> Result<Self::Node>;
    fn conv1d(&mut self, x: &Self::Node, kernel: &Self::Node, bias: &Self::Node, stride: usize) -> Result<Self::Node>;
    fn select_position(&mut self, x: &Self::Node, pos: usize) -> Result<Self::Node>;
    fn softmax_xent(&mut self, logits: &Self::Node, labels: &[usize], mask: &[T]) -> Result<Self::Node>;
    fn sum(&mut self, x: &Self::Node) -> Self::Node;
}

// ------------------------------------------------------------------ eager

/// Evaluation without recording.
#[derive(Debug, Default)]
pub struct Eager;

impl<T: Real> Graph<T> for Eager {
    type Node = Rc<Tensor<T>>;

    fn constant(&mut self, value: Tensor<T>) -> Self::Node {
        Rc::new(value)
    }

    fn param(&mut self, value: &Tensor<T>) -> Self::Node {
        Rc::new(value.clone())
    }

    fn value<'a>(&'a self, node: &'a Self::Node) -> &'a Tensor<T> {
        node
    }

    fn retains_intermediates(&self) -> bool {
        false
    }

    fn affine(&mut self, x: &Self::Node, w: &Self::Node, b: Option<&Self::Node>) -> Result<Self::Node> {
        Ok(Rc::new(k::affine(x, w, b.map(|b| &**b))?))
    }

    fn layernorm(&mut self, x: &Self::Node, eps: f64) -> Self::Node {
        Rc::new(k::layernorm(x, eps).0)
    }

    fn gelu(&mut self, x: &Self::Node) -> Self::Node {
        Rc::new(k::map(x, k::gelu_scalar))
    }

    fn relu(&mut self, x: &Self::Node) -> Self::Node {
        Rc::new(k::map(x, |v| v.max(T::zero())))
    }

    fn sigmoid(&mut self, x: &Self::Node) -> Self::Node {
        Rc::new(k::map(x, k::sigmoid_scalar))
    }

    fn tanh(&mut self, x: &Self::Node) -> Self::Node {
        Rc::new(k::map(x, T::tanh))
    }

    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        k::check_same_shape("add", a, b)?;
        Ok(Rc::new(k::zip_map(a, b, |x, y| x + y)))
    }

    fn mul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        k::check_same_shape("mul", a, b)?;
        Ok(Rc::new(k::zip_map(a, b, |x, y| x * y)))
    }

    fn mul_features(&mut self, x: &Self::Node, v: &Self::Node) -> Result<Self::Node> {
        Ok(Rc::new(k::mul_features(x, v)?))
    }

    fn scale_shift(&mut self, x: &Self::Node, scale: f64, shift: f64) -> Self::Node {
        let (a, b) = (T::lit(scale), T::lit(shift));
        Rc::new(k::map(x, |v| a * v + b))
    }

    fn reshape(&mut self, x: &Self::Node, shape: &[usize]) -> Result<Self::Node> {
        let t = Rc::try_unwrap(x.clone()).unwrap_or_else(|rc| (*rc).clone());
        Ok(Rc::new(t.reshape(shape)?))
    }

    fn permute_seq(&mut self, x: &Self::Node, perm: &Arc<Permutation>) -> Result<Self::Node> {
        Ok(Rc::new(k::permute_seq(x, perm)?))
    }

    fn gather_features(&mut self, x: &Self::Node, idx: &Arc<Permutation>) -> Result<Self::Node> {
        Ok(Rc::new(k::gather_features(x, idx)?))
    }

    fn concat_features(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        Ok(Rc::new(k::concat_features(a, b)?))
    }

    fn embedding(&mut self, table: &Self::Node, ids: &[usize], shape: &[usize]) -> Result<Self::Node> {
        Ok(Rc::new(k::embedding(table, ids, shape)?))
    }

    fn conv1d(&mut self, x: &Self::Node, kernel: &Self::Node, bias: &Self::Node, stride: usize) -> Result<Self::Node> {
        Ok(Rc::new(k::conv1d(x, kernel, bias, stride)?))
    }

    fn select_position(&mut self, x: &Self::Node, pos: usize) -> Result<Self::Node> {
        Ok(Rc::new(k::select_position(x, pos)?))
    }

    fn softmax_xent(&mut self, logits: &Self::Node, labels: &[usize], mask: &[T]) -> Result<Self::Node> {
        let (loss, _) = k::softmax_xent(logits, labels, mask)?;
        Ok(Rc::new(Tensor::scalar(loss)))
    }

    fn sum(&mut self, x: &Self::Node) -> Self::Node {
        Rc::new(Tensor::scalar(x.data().iter().copied().sum()))
    }
}

// ------------------------------------------------------------------- tape

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Affine { x: Var, w: Var, b: Option<Var> },
    LayerNorm { x: Var, inv_std: Vec<T> },
    Gelu { x: Var, grad: Vec<T> },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulFeatures { x: Var, v: Var },
    ScaleShift { x: Var, scale: T },
    Reshape(Var),
    PermuteSeq { x: Var, perm: Arc<Permutation> },
    GatherFeatures { x: Var, idx: Arc<Permutation> },
    Concat { a: Var, b: Var },
    Embedding { table: Var, ids: Vec<usize> },
    Conv1d { x: Var, kernel: Var, bias: Var, geo: ConvGeometry },
    SelectPosition { x: Var, pos: usize },
    SoftmaxXent { logits: Var, labels: Vec<usize>, mask: Vec<T>, probs: Vec<T> },
    Sum(Var),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Affine { .. } => "affine",
            Op::LayerNorm { .. } => "layernorm",
            Op::Gelu { .. } => "gelu",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::MulFeatures { .. } => "mul_features",
            Op::ScaleShift { .. } => "scale_shift",
            Op::Reshape(_) => "reshape",
            Op::PermuteSeq { .. } => "permute_seq",
            Op::GatherFeatures { .. } => "gather_features",
            Op::Concat { .. } => "concat_features",
            Op::Embedding { .. } => "embedding",
            Op::Conv1d { .. } => "conv1d",
            Op::SelectPosition { .. } => "select_position",
            Op::SoftmaxXent { .. } => "softmax_xent",
            Op::Sum(_) => "sum",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Linear record of executed operations for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    visited: Vec<Var>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            visited: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op_name(&self, var: Var) -> &'static str {
        self.nodes[var.0].op.name()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Gradient of the last `backward` root with respect to `var`.
    pub fn grad(&self, var: Var) -> Option<Tensor<T>> {
        let g = self.grads.get(var.0)?.as_ref()?;
        Some(Tensor::new(self.nodes[var.0].value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    /// Non-leaf operations in the order the last `backward` processed them.
    pub fn backward_order(&self) -> &[Var] {
        &self.visited
    }

    pub fn backward(&mut self, root: Var) -> Result<()> {
        if root.0 >= self.nodes.len() {
            return Err(Error::invalid("backward: root is not on this tape"));
        }
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::invalid(format!(
                "backward: root must be scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
        grads[root.0] = Some(vec![T::one()]);
        self.visited.clear();

        for i in (0..=root.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.visited.push(Var(i));
            backward_op(nodes, &mut grads, node, &g);
        }
        for (g, node) in grads.iter_mut().zip(nodes) {
            if !matches!(node.op, Op::Leaf) {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }
}

/// Runs `f` on the gradient buffer of `var`, allocating it on first use.
fn with_grad<T: Real>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    var: Var,
    f: impl FnOnce(&mut [T]),
) {
    let node = &nodes[var.0];
    if !node.requires_grad {
        return;
    }
    let buf = grads[var.0].get_or_insert_with(|| vec![T::zero(); node.value.len()]);
    f(buf);
}

fn backward_op<T: Real>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], node: &Node<T>, g: &[T]) {
    let val = |v: Var| &nodes[v.0].value;
    match &node.op {
        Op::Leaf => {}
        Op::Affine { x, w, b } => {
            let (xv, wv) = (val(*x), val(*w));
            with_grad(nodes, grads, *x, |gx| k::affine_backward(xv, wv, g, Some(gx), None, None));
            with_grad(nodes, grads, *w, |gw| k::affine_backward(xv, wv, g, None, Some(gw), None));
            if let Some(b) = b {
                with_grad(nodes, grads, *b, |gb| k::affine_backward(xv, wv, g, None, None, Some(gb)));
            }
        }
        Op::LayerNorm { x, inv_std } => {
            with_grad(nodes, grads, *x, |gx| k::layernorm_backward(&node.value, inv_std, g, gx));
        }
        Op::Gelu { x, grad } => {
            with_grad(nodes, grads, *x, |gx| {
                for ((acc, &gi), &d) in gx.iter_mut().zip(g).zip(grad) {
                    *acc += gi * d;
                }
            });
        }
        Op::Relu(x) => {
            let xv = val(*x).data();
            with_grad(nodes, grads, *x, |gx| {
                for ((acc, &gi), &xi) in gx.iter_mut().zip(g).zip(xv) {
                    if xi > T::zero() {
                        *acc += gi;
                    }
                }
            });
        }
        Op::Sigmoid(x) => {
            let y = node.value.data();
            with_grad(nodes, grads, *x, |gx| {
                for ((acc, &gi), &yi) in gx.iter_mut().zip(g).zip(y) {
                    *acc += gi * yi * (T::one() - yi);
                }
            });
        }
        Op::Tanh(x) => {
            let y = node.value.data();
            with_grad(nodes, grads, *x, |gx| {
                for ((acc, &gi), &yi) in gx.iter_mut().zip(g).zip(y) {
                    *acc += gi * (T::one() - yi * yi);
                }
            });
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                with_grad(nodes, grads, *v, |gv| {
                    for (acc, &gi) in gv.iter_mut().zip(g) {
                        *acc += gi;
                    }
                });
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            with_grad(nodes, grads, *a, |ga| {
                for ((acc, &gi), &o) in ga.iter_mut().zip(g).zip(bv) {
                    *acc += gi * o;
                }
            });
            with_grad(nodes, grads, *b, |gb| {
                for ((acc, &gi), &o) in gb.iter_mut().zip(g).zip(av) {
                    *acc += gi * o;
                }
            });
        }
        Op::MulFeatures { x, v } => {
            let (xv, vv) = (val(*x), val(*v));
            let d = vv.len();
            with_grad(nodes, grads, *x, |gx| {
                for (gr, ar) in g.chunks_exact(d).zip(gx.chunks_exact_mut(d)) {
                    for ((acc, &gi), &s) in ar.iter_mut().zip(gr).zip(vv.data()) {
                        *acc += gi * s;
                    }
                }
            });
            with_grad(nodes, grads, *v, |gv| {
                for (gr, xr) in g.chunks_exact(d).zip(xv.data().chunks_exact(d)) {
                    for ((acc, &gi), &xi) in gv.iter_mut().zip(gr).zip(xr) {
                        *acc += gi * xi;
                    }
                }
            });
        }
        Op::ScaleShift { x, scale } => {
            with_grad(nodes, grads, *x, |gx| {
                for (acc, &gi) in gx.iter_mut().zip(g) {
                    *acc += gi * *scale;
                }
            });
        }
        Op::Reshape(x) => {
            with_grad(nodes, grads, *x, |gx| {
                for (acc, &gi) in gx.iter_mut().zip(g) {
                    *acc += gi;
                }
            });
        }
        Op::PermuteSeq { x, perm } => {
            let m = val(*x).features();
            with_grad(nodes, grads, *x, |gx| k::permute_seq_backward(perm, m, g, gx));
        }
        Op::GatherFeatures { x, idx } => {
            with_grad(nodes, grads, *x, |gx| k::gather_features_backward(idx, g, gx));
        }
        Op::Concat { a, b } => {
            let (da, db) = (val(*a).features(), val(*b).features());
            with_grad(nodes, grads, *a, |ga| k::concat_features_backward(da, db, g, Some(ga), None));
            with_grad(nodes, grads, *b, |gb| k::concat_features_backward(da, db, g, None, Some(gb)));
        }
        Op::Embedding { table, ids } => {
            let m = val(*table).features();
            with_grad(nodes, grads, *table, |gt| k::embedding_backward(m, ids, g, gt));
        }
        Op::Conv1d { x, kernel, bias, geo } => {
            let (xv, kv) = (val(*x).data(), val(*kernel).data());
            with_grad(nodes, grads, *x, |gx| k::conv1d_backward(geo, xv, kv, g, Some(gx), None, None));
            with_grad(nodes, grads, *kernel, |gk| k::conv1d_backward(geo, xv, kv, g, None, Some(gk), None));
            with_grad(nodes, grads, *bias, |gb| k::conv1d_backward(geo, xv, kv, g, None, None, Some(gb)));
        }
        Op::SelectPosition { x, pos } => {
            let xv = val(*x);
            let (n, m) = (xv.shape()[xv.rank() - 2], xv.features());
            with_grad(nodes, grads, *x, |gx| k::select_position_backward(n, m, *pos, g, gx));
        }
        Op::SoftmaxXent { logits, labels, mask, probs } => {
            let c = val(*logits).features();
            with_grad(nodes, grads, *logits, |gl| {
                k::softmax_xent_backward(c, probs, labels, mask, g[0], gl)
            });
        }
        Op::Sum(x) => {
            with_grad(nodes, grads, *x, |gx| {
                for acc in gx.iter_mut() {
                    *acc += g[0];
                }
            });
        }
    }
}

impl<T: Real> Graph<T> for Tape<T> {
    type Node = Var;

    fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn param(&mut self, value: &Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: value.clone(),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn value<'a>(&'a self, node: &'a Var) -> &'a Tensor<T> {
        &self.nodes[node.0].value
    }

    fn affine(&mut self, x: &Var, w: &Var, b: Option<&Var>) -> Result<Var> {
        let out = k::affine(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        let mut inputs = vec![*x, *w];
        inputs.extend(b.copied());
        Ok(self.push(out, Op::Affine { x: *x, w: *w, b: b.copied() }, &inputs))
    }

    fn layernorm(&mut self, x: &Var, eps: f64) -> Var {
        let (out, inv_std) = k::layernorm(self.value(x), eps);
        self.push(out, Op::LayerNorm { x: *x, inv_std }, &[*x])
    }

    fn gelu(&mut self, x: &Var) -> Var {
        let (out, grad) = k::gelu_with_grad(self.value(x));
        self.push(out, Op::Gelu { x: *x, grad }, &[*x])
    }

    fn relu(&mut self, x: &Var) -> Var {
        let out = k::map(self.value(x), |v| v.max(T::zero()));
        self.push(out, Op::Relu(*x), &[*x])
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        let out = k::map(self.value(x), k::sigmoid_scalar);
        self.push(out, Op::Sigmoid(*x), &[*x])
    }

    fn tanh(&mut self, x: &Var) -> Var {
        let out = k::map(self.value(x), T::tanh);
        self.push(out, Op::Tanh(*x), &[*x])
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        k::check_same_shape("add", self.value(a), self.value(b))?;
        let out = k::zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(*a, *b), &[*a, *b]))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        k::check_same_shape("mul", self.value(a), self.value(b))?;
        let out = k::zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(*a, *b), &[*a, *b]))
    }

    fn mul_features(&mut self, x: &Var, v: &Var) -> Result<Var> {
        let out = k::mul_features(self.value(x), self.value(v))?;
        Ok(self.push(out, Op::MulFeatures { x: *x, v: *v }, &[*x, *v]))
    }

    fn scale_shift(&mut self, x: &Var, scale: f64, shift: f64) -> Var {
        let (a, b) = (T::lit(scale), T::lit(shift));
        let out = k::map(self.value(x), |v| a * v + b);
        self.push(out, Op::ScaleShift { x: *x, scale: a }, &[*x])
    }

    fn reshape(&mut self, x: &Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(*x), &[*x]))
    }

    fn permute_seq(&mut self, x: &Var, perm: &Arc<Permutation>) -> Result<Var> {
        let out = k::permute_seq(self.value(x), perm)?;
        Ok(self.push(out, Op::PermuteSeq { x: *x, perm: perm.clone() }, &[*x]))
    }

    fn gather_features(&mut self, x: &Var, idx: &Arc<Permutation>) -> Result<Var> {
        let out = k::gather_features(self.value(x), idx)?;
        Ok(self.push(out, Op::GatherFeatures { x: *x, idx: idx.clone() }, &[*x]))
    }

    fn concat_features(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = k::concat_features(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Concat { a: *a, b: *b }, &[*a, *b]))
    }

    fn embedding(&mut self, table: &Var, ids: &[usize], shape: &[usize]) -> Result<Var> {
        let out = k::embedding(self.value(table), ids, shape)?;
        Ok(self.push(out, Op::Embedding { table: *table, ids: ids.to_vec() }, &[*table]))
    }

    fn conv1d(&mut self, x: &Var, kernel: &Var, bias: &Var, stride: usize) -> Result<Var> {
        let geo = k::conv_geometry(self.value(x), self.value(kernel), self.value(bias), stride)?;
        let out = k::conv1d(self.value(x), self.value(kernel), self.value(bias), stride)?;
        Ok(self.push(
            out,
            Op::Conv1d { x: *x, kernel: *kernel, bias: *bias, geo },
            &[*x, *kernel, *bias],
        ))
    }

    fn select_position(&mut self, x: &Var, pos: usize) -> Result<Var> {
        let out = k::select_position(self.value(x), pos)?;
        Ok(self.push(out, Op::SelectPosition { x: *x, pos }, &[*x]))
    }

    fn softmax_xent(&mut self, logits: &Var, labels: &[usize], mask: &[T]) -> Result<Var> {
        let (loss, probs) = k::softmax_xent(self.value(logits), labels, mask)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits: *logits,
                labels: labels.to_vec(),
                mask: mask.to_vec(),
                probs,
            },
            &[*logits],
        ))
    }

    fn sum(&mut self, x: &Var) -> Var {
        let out = Tensor::scalar(self.value(x).data().iter().copied().sum());
        self.push(out, Op::Sum(*x), &[*x])
    }
}
