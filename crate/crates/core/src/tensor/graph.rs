//! Define-by-run computation record with reverse-mode adjoints.
//!
//! Every operation evaluates eagerly and appends a node holding its value and
//! the references needed to propagate adjoints. [`Graph::backward`] walks the
//! nodes once, newest first, and returns gradients laid out like the
//! [`ParameterStore`] the parameters were drawn from.

use rand::Rng as _;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::tensor::array::{broadcastable, gemm, transpose};
use crate::tensor::{ParameterStore, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul {
        a: Var,
        b: Var,
        transpose_b: bool,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    SmoothL1 {
        pred: Var,
        target: Tensor,
        mask: Option<Tensor>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded operations.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Record parameter `index` of `store` as a differentiable leaf.
    pub fn param(&mut self, store: &ParameterStore, index: usize) -> Var {
        self.push(store.tensor(index).clone(), Op::Param(index), true)
    }

    /// Record every parameter of `store`, in store order.
    pub fn params(&mut self, store: &ParameterStore) -> Vec<Var> {
        (0..store.len()).map(|i| self.param(store, i)).collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let g = self.any_grad(&[a, b]);
        Ok(self.push(
            value,
            Op::MatMul {
                a,
                b,
                transpose_b: false,
            },
            g,
        ))
    }

    /// `a · bᵀ` with `b` stored `[n × k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_t(self.value(b))?;
        let g = self.any_grad(&[a, b]);
        Ok(self.push(
            value,
            Op::MatMul {
                a,
                b,
                transpose_b: true,
            },
            g,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let g = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), g))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        let g = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), g))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).sigmoid();
        let g = self.any_grad(&[a]);
        self.push(value, Op::Sigmoid(a), g)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).tanh();
        let g = self.any_grad(&[a]);
        self.push(value, Op::Tanh(a), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).relu();
        let g = self.any_grad(&[a]);
        self.push(value, Op::Relu(a), g)
    }

    /// Inverted dropout. In eval mode (or with `p == 0`) returns `x` itself.
    pub fn dropout<R: RngCore>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Argument(format!("dropout probability {p} not in [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let input = self.value(x);
        let mask: Vec<f64> = (0..input.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(input.shape().to_vec(), data)?;
        let g = self.any_grad(&[x]);
        Ok(self.push(value, Op::Dropout { input: x, mask }, g))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let parts: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
        let value = Tensor::concat(&parts, axis)?;
        let g = self.any_grad(inputs);
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            g,
        ))
    }

    pub fn slice(&mut self, input: Var, axis: usize, range: std::ops::Range<usize>) -> Result<Var> {
        let start = range.start;
        let value = self.value(input).slice(axis, range)?;
        let g = self.any_grad(&[input]);
        Ok(self.push(value, Op::Slice { input, axis, start }, g))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        let g = self.any_grad(&[input]);
        Ok(self.push(value, Op::Reshape(input), g))
    }

    /// Mean smooth-L1 loss over the elements selected by `mask` (all when
    /// `None`). Returns a one-element node.
    pub fn smooth_l1(&mut self, pred: Var, target: &Tensor, mask: Option<&Tensor>) -> Result<Var> {
        let loss = smooth_l1(self.value(pred), target, mask)?;
        let count = match mask {
            Some(m) => m.data().iter().filter(|&&w| w != 0.0).count(),
            None => target.len(),
        };
        let g = self.any_grad(&[pred]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SmoothL1 {
                pred,
                target: target.clone(),
                mask: mask.cloned(),
                count,
            },
            g,
        ))
    }

    /// Adjoints of the one-element node `loss` with respect to every
    /// parameter recorded from `store`. Parameters that do not influence the
    /// loss receive zero gradients.
    pub fn backward(&self, loss: Var, store: &ParameterStore) -> Result<ParameterStore> {
        if self.value(loss).len() != 1 {
            return Err(Error::dim("backward", self.value(loss).shape(), &[1]));
        }
        let mut out = store.zeros_like();
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(idx) => {
                    if *idx >= out.len() {
                        return Err(Error::Contract("parameter recorded from another store".into()));
                    }
                    accumulate_into(out.tensor_mut(*idx), &g);
                }
                Op::MatMul { a, b, transpose_b } => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let (m, k) = av.dims2("matmul")?;
                    let n = g.shape()[1];
                    if self.requires_grad(*a) {
                        // ga = g·bᵀ (plain) or g·b (transposed)
                        let data = if *transpose_b {
                            gemm(g.data(), bv.data(), m, n, k)
                        } else {
                            gemm(g.data(), &transpose(bv.data(), k, n), m, n, k)
                        };
                        self.accumulate(&mut grads, *a, Tensor::new(vec![m, k], data)?);
                    }
                    if self.requires_grad(*b) {
                        let gb = if *transpose_b {
                            Tensor::new(vec![n, k], gemm(&transpose(g.data(), m, n), av.data(), n, m, k))?
                        } else {
                            Tensor::new(vec![k, n], gemm(&transpose(av.data(), m, k), g.data(), k, m, n))?
                        };
                        self.accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.requires_grad(*b) {
                        let gb = reduce_to(&g, self.value(*b).shape());
                        self.accumulate(&mut grads, *b, gb);
                    }
                    if self.requires_grad(*a) {
                        let ga = reduce_to(&g, self.value(*a).shape());
                        self.accumulate(&mut grads, *a, ga);
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    if self.requires_grad(*a) {
                        let ga = g.mul(bv)?;
                        self.accumulate(&mut grads, *a, ga);
                    }
                    if self.requires_grad(*b) {
                        let gb = reduce_to(&g.mul(av)?, bv.shape());
                        self.accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = zip_map(&g, y, |g, y| g * y * (1.0 - y));
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = zip_map(&g, y, |g, y| g * (1.0 - y * y));
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let ga = zip_map(&g, x, |g, x| if x > 0.0 { g } else { 0.0 });
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Dropout { input, mask } => {
                    let data = g.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                    let ga = Tensor::new(g.shape().to_vec(), data)?;
                    self.accumulate(&mut grads, *input, ga);
                }
                Op::Concat { inputs, axis } => {
                    let mut start = 0;
                    for v in inputs {
                        let w = self.value(*v).shape()[*axis];
                        if self.requires_grad(*v) {
                            let part = g.slice(*axis, start..start + w)?;
                            self.accumulate(&mut grads, *v, part);
                        }
                        start += w;
                    }
                }
                Op::Slice { input, axis, start } => {
                    let ga = scatter_slice(&g, self.value(*input).shape(), *axis, *start);
                    self.accumulate(&mut grads, *input, ga);
                }
                Op::Reshape(input) => {
                    let ga = g.reshape(self.value(*input).shape())?;
                    self.accumulate(&mut grads, *input, ga);
                }
                Op::SmoothL1 {
                    pred,
                    target,
                    mask,
                    count,
                } => {
                    let scale = g.item() / *count as f64;
                    let p = self.value(*pred);
                    let data = p
                        .data()
                        .iter()
                        .zip(target.data())
                        .enumerate()
                        .map(|(i, (&p, &t))| {
                            let w = mask.as_ref().map_or(1.0, |m| m.data()[i]);
                            if w == 0.0 {
                                return 0.0;
                            }
                            let r = p - t;
                            let d = if r.abs() < 1.0 { r } else { r.signum() };
                            scale * w * d
                        })
                        .collect();
                    let ga = Tensor::new(p.shape().to_vec(), data)?;
                    self.accumulate(&mut grads, *pred, ga);
                }
            }
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.requires_grad(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => accumulate_into(existing, &g),
            slot @ None => *slot = Some(g),
        }
    }
}

fn accumulate_into(dst: &mut Tensor, src: &Tensor) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Sum `g` over the leading axes that broadcasting repeated.
fn reduce_to(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    debug_assert!(broadcastable(g.shape(), shape));
    let mut out = Tensor::zeros(shape);
    let r = out.len();
    for (i, v) in g.data().iter().enumerate() {
        out.data_mut()[i % r] += v;
    }
    out
}

fn scatter_slice(g: &Tensor, shape: &[usize], axis: usize, start: usize) -> Tensor {
    let mut out = Tensor::zeros(shape);
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let width = shape[axis];
    let w = g.shape()[axis];
    for o in 0..outer {
        let src = &g.data()[o * w * inner..(o + 1) * w * inner];
        let base = o * width * inner + start * inner;
        out.data_mut()[base..base + w * inner].copy_from_slice(src);
    }
    out
}

/// Mean smooth-L1 loss (transition at |residual| = 1) over masked elements.
pub fn smooth_l1(pred: &Tensor, target: &Tensor, mask: Option<&Tensor>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dim("smooth_l1", pred.shape(), target.shape()));
    }
    if let Some(m) = mask {
        if m.shape() != pred.shape() {
            return Err(Error::dim("smooth_l1 mask", pred.shape(), m.shape()));
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        let w = mask.map_or(1.0, |m| m.data()[i]);
        if w == 0.0 {
            continue;
        }
        sum += w * smooth_l1_term(p - t);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Argument("smooth_l1 mask selects no elements".into()));
    }
    Ok(sum / count as f64)
}

pub fn smooth_l1_term(residual: f64) -> f64 {
    let a = residual.abs();
    if a < 1.0 {
        0.5 * a * a
    } else {
        a - 0.5
    }
}
