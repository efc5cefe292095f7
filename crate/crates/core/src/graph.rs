//! Reverse-mode automatic differentiation over a per-pass tape.
//!
//! A [`Graph`] owns every value produced during one forward pass. Nodes are
//! appended in evaluation order, so each node's inputs have smaller indices and
//! a reverse index sweep is a reverse topological order. A node requires a
//! gradient iff it is a leaf created with `requires_grad` or any of its inputs
//! requires one; subgraphs without trainable ancestors are never visited by
//! [`Graph::backward`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::element::Element;
use crate::error::{invalid, Error, Result};
use crate::ops::basic::{
    linear_backward, linear_forward, relu_backward, relu_forward, zip_same_shape,
};
use crate::ops::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use crate::ops::loss::{softmax_cross_entropy_backward, softmax_cross_entropy_forward};
use crate::ops::norm::{batch_norm2d_backward, batch_norm2d_forward, BatchNormConfig, NormStats};
use crate::ops::pool::{
    adaptive_avg_pool2d_backward, adaptive_avg_pool2d_forward, max_pool2d_backward,
    max_pool2d_forward,
};
use crate::ops::Conv2dParams;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    AvgPool {
        input: Var,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
        training: bool,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor<T>,
    },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Relu(a) | Op::Sum(a) | Op::Mean(a) | Op::Reshape(a) => vec![*a],
            Op::Linear {
                input,
                weight,
                bias,
            }
            | Op::Conv2d {
                input,
                weight,
                bias,
                ..
            } => {
                let mut v = vec![*input, *weight];
                v.extend(*bias);
                v
            }
            Op::MaxPool { input, .. } | Op::AvgPool { input } => vec![*input],
            Op::BatchNorm {
                input, gamma, beta, ..
            } => vec![*input, *gamma, *beta],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(invalid!("variable {} does not belong to this graph", v.0))
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = zip_same_shape("add", self.value(a), self.value(b), |x, y| x + y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = zip_same_shape("mul", self.value(a), self.value(b), |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Mul(a, b)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = relu_forward(self.value(x));
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, rg, Op::Relu(x)))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let total = self.value(x).data().iter().map(|v| v.as_f64()).sum::<f64>();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::scalar(T::from_f64_lossy(total)), rg, Op::Sum(x)))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let v = self.value(x);
        let mean = v.data().iter().map(|v| v.as_f64()).sum::<f64>() / v.len() as f64;
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::scalar(T::from_f64_lossy(mean)), rg, Op::Mean(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, rg, Op::Reshape(x)))
    }

    /// Collapses every axis after the first: N x ... -> N x F.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let shape = self.value(x).shape();
        let n = *shape
            .first()
            .ok_or_else(|| invalid!("flatten needs rank >= 1"))?;
        let f = shape[1..].iter().product();
        self.reshape(x, &[n, f])
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        self.check(input)?;
        self.check(weight)?;
        if let Some(b) = bias {
            self.check(b)?;
        }
        let value = linear_forward(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
        )?;
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(
            value,
            rg,
            Op::Linear {
                input,
                weight,
                bias,
            },
        ))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        params: Conv2dParams,
    ) -> Result<Var> {
        self.check(input)?;
        self.check(weight)?;
        if let Some(b) = bias {
            self.check(b)?;
        }
        let (x, w) = (self.value(input), self.value(weight));
        let b = bias.map(|b| self.value(b));
        let geom = ConvGeometry::new(x.shape(), w.shape(), b.map(|b| b.shape()), params)?;
        let value = conv2d_forward(x, w, b, params)?;
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(
            value,
            rg,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
        ))
    }

    pub fn max_pool2d(&mut self, input: Var, kernel: usize, stride: usize) -> Result<Var> {
        self.max_pool2d_padded(input, kernel, stride, 0)
    }

    pub fn max_pool2d_padded(
        &mut self,
        input: Var,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        self.check(input)?;
        let (value, argmax) = max_pool2d_forward(self.value(input), kernel, stride, padding)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, rg, Op::MaxPool { input, argmax }))
    }

    pub fn adaptive_avg_pool2d(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        self.check(input)?;
        let value = adaptive_avg_pool2d_forward(self.value(input), out_h, out_w)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, rg, Op::AvgPool { input }))
    }

    /// Global average pooling to N x C x 1 x 1.
    pub fn adaptive_avg_pool_1x1(&mut self, input: Var) -> Result<Var> {
        self.adaptive_avg_pool2d(input, 1, 1)
    }

    pub fn batch_norm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: NormStats<'_, T>,
        cfg: BatchNormConfig,
    ) -> Result<Var> {
        self.check(input)?;
        self.check(gamma)?;
        self.check(beta)?;
        let training = matches!(stats, NormStats::Train { .. });
        let out = batch_norm2d_forward(
            self.value(input),
            self.value(gamma),
            self.value(beta),
            stats,
            cfg,
        )?;
        let rg = self.any_grad(&[input, gamma, beta]);
        let op = Op::BatchNorm {
            input,
            gamma,
            beta,
            mean: out.mean,
            inv_std: out.inv_std,
            training,
        };
        Ok(self.push(out.output, rg, op))
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        self.check(logits)?;
        let (loss, probs) = softmax_cross_entropy_forward(self.value(logits), targets)?;
        let rg = self.any_grad(&[logits]);
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs,
        };
        Ok(self.push(Tensor::scalar(loss), rg, op))
    }

    /// Softmax probabilities saved by a cross-entropy node.
    pub fn probabilities(&self, loss: Var) -> Option<&Tensor<T>> {
        match &self.nodes.get(loss.0)?.op {
            Op::CrossEntropy { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Propagates d(root)/d(node) into every node that requires a gradient.
    ///
    /// Gradients accumulate additively on leaves; intermediate gradients are
    /// released once consumed.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        self.check(root)?;
        if self.value(root).len() != 1 {
            return Err(invalid!(
                "backward root must be a scalar, got shape {:?}",
                self.value(root).shape()
            ));
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        let seed = Tensor::from_parts_unchecked(self.value(root).shape().to_vec(), vec![T::one()]);
        self.accumulate(root, seed);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || node.grad.is_none() {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            for input in node.op.inputs() {
                if input.0 >= idx {
                    return Err(Error::CorruptedGraph(format!(
                        "node {idx} consumes node {} which is not an ancestor",
                        input.0
                    )));
                }
            }
            let grad = self.nodes[idx].grad.take().expect("checked above");
            for (var, g) in self.input_grads(idx, &grad) {
                self.accumulate(var, g);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        let node = &mut self.nodes[v.0];
        match node.grad.as_mut() {
            Some(acc) => acc.add_assign(&g),
            None => node.grad = Some(g),
        }
    }

    fn input_grads(&self, idx: usize, grad: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        let mut emit = |v: Var, g: Option<Tensor<T>>| {
            if let Some(g) = g {
                out.push((v, g));
            }
        };
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                emit(*a, needs(*a).then(|| grad.clone()));
                emit(*b, needs(*b).then(|| grad.clone()));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let times = |other: &Tensor<T>| {
                    zip_same_shape("mul", grad, other, |g, o| g * o).expect("same shape")
                };
                emit(*a, needs(*a).then(|| times(vb)));
                emit(*b, needs(*b).then(|| times(va)));
            }
            Op::Relu(x) => emit(*x, Some(relu_backward(self.value(*x), grad))),
            Op::Sum(x) => {
                let g = grad.data()[0];
                emit(*x, Some(self.value(*x).map(|_| g)));
            }
            Op::Mean(x) => {
                let v = self.value(*x);
                let g = grad.data()[0] / T::from_usize(v.len()).expect("length fits");
                emit(*x, Some(v.map(|_| g)));
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape();
                emit(
                    *x,
                    Some(grad.clone().reshape(shape).expect("same element count")),
                );
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let need = (needs(*input), needs(*weight), bias.is_some_and(needs));
                let g = linear_backward(self.value(*input), self.value(*weight), grad, need);
                emit(*input, g.input);
                emit(*weight, g.weight);
                if let Some(b) = bias {
                    emit(*b, g.bias);
                }
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let need = (needs(*input), needs(*weight), bias.is_some_and(needs));
                let g = conv2d_backward(geom, self.value(*input), self.value(*weight), grad, need);
                emit(*input, g.input);
                emit(*weight, g.weight);
                if let Some(b) = bias {
                    emit(*b, g.bias);
                }
            }
            Op::MaxPool { input, argmax } => {
                emit(
                    *input,
                    Some(max_pool2d_backward(
                        self.value(*input).shape(),
                        argmax,
                        grad,
                    )),
                );
            }
            Op::AvgPool { input } => {
                emit(
                    *input,
                    Some(adaptive_avg_pool2d_backward(
                        self.value(*input).shape(),
                        grad,
                    )),
                );
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                mean,
                inv_std,
                training,
            } => {
                let g = batch_norm2d_backward(
                    self.value(*input),
                    self.value(*gamma),
                    mean,
                    inv_std,
                    *training,
                    grad,
                    needs(*input),
                );
                emit(*input, g.input);
                emit(*gamma, needs(*gamma).then_some(g.gamma));
                emit(*beta, needs(*beta).then_some(g.beta));
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                emit(
                    *logits,
                    Some(softmax_cross_entropy_backward(
                        probs,
                        targets,
                        grad.data()[0],
                    )),
                );
            }
        }
        out.retain(|(v, _)| needs(*v));
        out
    }
}
