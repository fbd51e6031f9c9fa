//! A recording tape for reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction and `backward` walks it once in reverse.

use std::ops::Range;

use rand::Rng;

use super::kernels::{self, NormCache, UpsamplePlan};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Linear {
        x: Var,
        weights: Var,
    },
    Upsample {
        x: Var,
        plan: UpsamplePlan,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    ChannelNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        cache: NormCache,
    },
    Dropout {
        x: Var,
        scales: Vec<f64>,
    },
    MseSubset {
        recon: Var,
        target: Var,
        range: Range<usize>,
    },
    WeightedSum {
        terms: Vec<(Var, f64)>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Tensor>,
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

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            grad: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable leaf; its gradient is available after [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that receives no gradient (inputs, targets).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.nodes[v.0].grad.take()
    }

    pub fn linear(&mut self, x: Var, weights: Var) -> Result<Var> {
        let value = kernels::linear_channel_combination(self.value(x), self.value(weights))?;
        let rg = self.needs(x) || self.needs(weights);
        Ok(self.push(Op::Linear { x, weights }, value, rg))
    }

    pub fn upsample(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let xv = self.value(x);
        let plan = UpsamplePlan::new(xv.height(), xv.width(), out_h, out_w)?;
        let value = plan.forward(xv);
        let rg = self.needs(x);
        Ok(self.push(Op::Upsample { x, plan }, value, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = kernels::relu(self.value(x));
        let rg = self.needs(x);
        self.push(Op::Relu { x }, value, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = kernels::sigmoid(self.value(x));
        let rg = self.needs(x);
        self.push(Op::Sigmoid { x }, value, rg)
    }

    pub fn channel_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (value, cache) = kernels::channel_norm(self.value(x), self.value(gamma), self.value(beta))?;
        let rg = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(Op::ChannelNorm { x, gamma, beta, cache }, value, rg))
    }

    /// Zeroes whole channels with probability `p` and rescales survivors by
    /// `1 / (1 - p)`. Disabled dropout returns `x` itself.
    pub fn channel_dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R, enabled: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !enabled {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let scales: Vec<f64> = (0..self.value(x).channels())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let value = kernels::scale_channels(self.value(x), &scales);
        let rg = self.needs(x);
        Ok(self.push(Op::Dropout { x, scales }, value, rg))
    }

    pub fn mse_subset(&mut self, recon: Var, target: Var, range: Range<usize>) -> Result<Var> {
        let loss = kernels::mse_subset(self.value(recon), self.value(target), range.clone())?;
        let rg = self.needs(recon);
        Ok(self.push(Op::MseSubset { recon, target, range }, Tensor::scalar(loss), rg))
    }

    /// `Σ coef · term` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, coef) in terms {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(Error::InvalidShape(format!(
                    "weighted sum expects scalars, got {:?}",
                    t.shape()
                )));
            }
            total += coef * t.data()[0];
        }
        let rg = terms.iter().any(|&(v, _)| self.needs(v));
        Ok(self.push(Op::WeightedSum { terms: terms.to_vec() }, Tensor::scalar(total), rg))
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(acc) => acc.add_assign(&g),
            None => node.grad = Some(g),
        }
    }

    /// Back-propagates from the scalar `root`. Each node is visited once,
    /// in reverse recording order.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::InvalidShape("backward needs a scalar root".into()));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[root.0].grad = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            // Split borrow: the op is read while other nodes are updated.
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.backward_op(&op, i, &g);
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(g);
        }
        if self
            .nodes
            .iter()
            .any(|n| n.grad.as_ref().is_some_and(|g| !g.is_finite()))
        {
            return Err(Error::NumericFailure("non-finite gradient".into()));
        }
        Ok(())
    }

    fn backward_op(&mut self, op: &Op, index: usize, g: &Tensor) {
        match op {
            Op::Leaf => {}
            Op::Linear { x, weights } => {
                let (dx, dw) = kernels::linear_channel_combination_backward(
                    self.value(*x),
                    self.value(*weights),
                    g,
                    self.needs(*x),
                );
                if let Some(dx) = dx {
                    self.accumulate(*x, dx);
                }
                self.accumulate(*weights, dw);
            }
            Op::Upsample { x, plan } => {
                let (_, h, w) = self.value(*x).shape();
                let dx = plan.backward(h, w, g);
                self.accumulate(*x, dx);
            }
            Op::Relu { x } => {
                let mut dx = g.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(self.value(*x).data()) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                self.accumulate(*x, dx);
            }
            Op::Sigmoid { x } => {
                let mut dx = g.clone();
                for (d, &s) in dx.data_mut().iter_mut().zip(self.nodes[index].value.data()) {
                    *d *= s * (1.0 - s);
                }
                self.accumulate(*x, dx);
            }
            Op::ChannelNorm { x, gamma, beta, cache } => {
                let (dx, dg, db) = kernels::channel_norm_backward(cache, self.value(*gamma), g);
                self.accumulate(*x, dx);
                self.accumulate(*gamma, dg);
                self.accumulate(*beta, db);
            }
            Op::Dropout { x, scales } => {
                let dx = kernels::scale_channels(g, scales);
                self.accumulate(*x, dx);
            }
            Op::MseSubset { recon, target, range } => {
                let r = self.value(*recon);
                let t = self.value(*target);
                let p = r.plane_len();
                let coef = 2.0 * g.data()[0] / p as f64;
                let mut dr = Tensor::zeros(r.channels(), r.height(), r.width());
                let span = range.start * p..range.end * p;
                for ((d, a), b) in dr.data_mut()[span.clone()]
                    .iter_mut()
                    .zip(&r.data()[span.clone()])
                    .zip(&t.data()[span])
                {
                    *d = coef * (a - b);
                }
                self.accumulate(*recon, dr);
            }
            Op::WeightedSum { terms } => {
                let s = g.data()[0];
                for &(v, coef) in terms {
                    self.accumulate(v, Tensor::scalar(coef * s));
                }
            }
        }
    }
}
