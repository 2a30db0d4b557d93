//! Reverse-mode differentiation over a flat tape.
//!
//! Values are computed eagerly when an op is recorded; `backward` walks the
//! tape in reverse and returns per-node gradients. Gradients for
//! [`Parameter`] leaves are folded into the parameters with
//! [`Gradients::accumulate`]. A tape lives for exactly one forward/backward
//! cycle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ArcError, Result};
use crate::tensor::{self, Tensor, COSINE_NORM_FLOOR};

/// A learnable matrix together with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }

    /// Replaces the value; the new tensor must have the same shape.
    pub fn set_value(&mut self, value: Tensor) -> Result<()> {
        if value.shape() != self.value.shape() {
            return Err(ArcError::dim(
                "set_value",
                format!(
                    "{}: {:?} vs {:?}",
                    self.name,
                    value.shape(),
                    self.value.shape()
                ),
            ));
        }
        self.value = value;
        Ok(())
    }

    pub(crate) fn value_mut(&mut self) -> &mut Tensor {
        &mut self.value
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    fn add_grad(&mut self, g: &Tensor) -> Result<()> {
        self.grad = tensor::add(&self.grad, g)?;
        Ok(())
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Dropout(Var, Vec<f64>),
    Concat(Vec<Var>),
    SelectRows(Var, Vec<usize>),
    Softmax(Var, f64),
    Cosine(Var, Var),
    MarginLoss(Var, Vec<bool>, f64),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by `backward` but not tied to any
    /// parameter.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Records parameter `params[id]`; its gradient is routed back by
    /// [`Gradients::accumulate`].
    pub fn param(&mut self, id: usize, p: &Parameter) -> Var {
        self.push(p.value.clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::matmul_nt(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMulNt(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::add(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::sub(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    /// Broadcast-adds a `1×c` bias row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let v = tensor::add_row(self.value(a), self.value(bias))?;
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(v, Op::AddRow(a, bias), ng))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let v = self.value(a).scale(k).finite("scale")?;
        let ng = self.ng(a);
        Ok(self.push(v, Op::Scale(a, k), ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = tensor::relu(self.value(a));
        let ng = self.ng(a);
        self.push(v, Op::Relu(a), ng)
    }

    /// Inverted dropout. In training mode each entry survives with
    /// probability `1 - p` and is scaled by `1/(1-p)`; otherwise identity.
    pub fn dropout(&mut self, a: Var, p: f64, seed: u64, train: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(ArcError::invalid(format!(
                "dropout probability must be in [0, 1), got {p}"
            )));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let src = self.value(a);
        let data = src.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let v = Tensor::from_vec(src.rows(), src.cols(), data)?;
        let ng = self.ng(a);
        Ok(self.push(v, Op::Dropout(a, mask), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = tensor::concat_cols(&tensors)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(v, Op::Concat(parts.to_vec()), ng))
    }

    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let v = self.value(a).select_rows(idx)?;
        let ng = self.ng(a);
        Ok(self.push(v, Op::SelectRows(a, idx.to_vec()), ng))
    }

    pub fn row_softmax(&mut self, a: Var, scale: f64) -> Result<Var> {
        let v = tensor::row_softmax(self.value(a), scale)?;
        let ng = self.ng(a);
        Ok(self.push(v, Op::Softmax(a, scale), ng))
    }

    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::cosine_rows(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Cosine(a, b), ng))
    }

    /// Mean over rows of `1 - cos` (normal) or `max(0, cos - margin)`
    /// (anomalous), where `cos` is an `n×1` column of cosine similarities.
    pub fn marginal_cosine_loss(&mut self, cos: Var, anomalous: &[bool], margin: f64) -> Result<Var> {
        let c = self.value(cos);
        if c.cols() != 1 || c.rows() != anomalous.len() {
            return Err(ArcError::dim(
                "marginal_cosine_loss",
                format!("{:?} cosines for {} labels", c.shape(), anomalous.len()),
            ));
        }
        if c.rows() == 0 {
            return Err(ArcError::invalid("loss over an empty query set"));
        }
        let total: f64 = c
            .data()
            .iter()
            .zip(anomalous)
            .map(|(&c, &y)| if y { (c - margin).max(0.0) } else { 1.0 - c })
            .sum();
        let v = Tensor::from_vec(1, 1, vec![total / c.rows() as f64])?;
        let ng = self.ng(cos);
        Ok(self.push(v, Op::MarginLoss(cos, anomalous.to_vec(), margin), ng))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Tensor::from_vec(1, 1, vec![self.value(a).sum()])?;
        let ng = self.ng(a);
        Ok(self.push(v, Op::Sum(a), ng))
    }

    /// Gradient of `sum(root)` with respect to every recorded node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let r = self.value(root);
        grads[root.0] = Some(Tensor::filled(r.rows(), r.cols(), 1.0));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            // leaves keep their gradient for the caller
            if matches!(node.op, Op::Leaf | Op::Param(_)) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let mut send = |v: Var, d: Tensor| -> Result<()> {
                if !self.nodes[v.0].needs_grad {
                    return Ok(());
                }
                let slot = &mut grads[v.0];
                *slot = Some(match slot.take() {
                    Some(prev) => tensor::add(&prev, &d)?,
                    None => d,
                });
                Ok(())
            };
            match &node.op {
                Op::Leaf | Op::Param(_) => unreachable!(),
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        send(*a, tensor::matmul_nt(&g, self.value(*b))?)?;
                    }
                    if self.ng(*b) {
                        send(*b, tensor::matmul_tn(self.value(*a), &g)?)?;
                    }
                }
                Op::MatMulNt(a, b) => {
                    if self.ng(*a) {
                        send(*a, tensor::matmul(&g, self.value(*b))?)?;
                    }
                    if self.ng(*b) {
                        send(*b, tensor::matmul_tn(&g, self.value(*a))?)?;
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone())?;
                    send(*b, g)?;
                }
                Op::Sub(a, b) => {
                    send(*b, g.scale(-1.0))?;
                    send(*a, g)?;
                }
                Op::AddRow(a, bias) => {
                    if self.ng(*bias) {
                        let sums = g.column_means().iter().map(|m| m * g.rows() as f64).collect();
                        send(*bias, Tensor::from_vec(1, g.cols(), sums)?)?;
                    }
                    send(*a, g)?;
                }
                Op::Scale(a, k) => send(*a, g.scale(*k))?,
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut d = g;
                    for (dv, &xv) in d.data_mut().iter_mut().zip(x.data()) {
                        if xv <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                    send(*a, d)?;
                }
                Op::Dropout(a, mask) => {
                    let mut d = g;
                    for (dv, m) in d.data_mut().iter_mut().zip(mask) {
                        *dv *= m;
                    }
                    send(*a, d)?;
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.ng(p) {
                            let idx: Vec<usize> = (off..off + w).collect();
                            send(p, g.select_cols(&idx)?)?;
                        }
                        off += w;
                    }
                }
                Op::SelectRows(a, idx) => {
                    let src = self.value(*a);
                    let mut d = Tensor::zeros(src.rows(), src.cols());
                    for (k, &r) in idx.iter().enumerate() {
                        for (dv, gv) in d.row_mut(r).iter_mut().zip(g.row(k)) {
                            *dv += gv;
                        }
                    }
                    send(*a, d)?;
                }
                Op::Softmax(a, scale) => {
                    let y = &node.value;
                    let mut d = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let inner: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((dv, &yv), &gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *dv = yv * (gv - inner) / scale;
                        }
                    }
                    send(*a, d)?;
                }
                Op::Cosine(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let mut dx = Tensor::zeros(x.rows(), x.cols());
                    let mut dy = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..x.rows() {
                        let (xr, yr) = (x.row(r), y.row(r));
                        let raw_nx = tensor::norm(xr);
                        let raw_ny = tensor::norm(yr);
                        let nx = raw_nx.max(COSINE_NORM_FLOOR);
                        let ny = raw_ny.max(COSINE_NORM_FLOOR);
                        let c = node.value.get(r, 0);
                        let gr = g.get(r, 0);
                        // a clamped norm is locally constant
                        let kx = if raw_nx > COSINE_NORM_FLOOR { c / (nx * nx) } else { 0.0 };
                        let ky = if raw_ny > COSINE_NORM_FLOOR { c / (ny * ny) } else { 0.0 };
                        for j in 0..xr.len() {
                            dx.set(r, j, gr * (yr[j] / (nx * ny) - kx * xr[j]));
                            dy.set(r, j, gr * (xr[j] / (nx * ny) - ky * yr[j]));
                        }
                    }
                    send(*a, dx)?;
                    send(*b, dy)?;
                }
                Op::MarginLoss(c, labels, margin) => {
                    let cos = self.value(*c);
                    let n = labels.len() as f64;
                    let up = g.get(0, 0);
                    let d = cos
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&cv, &y)| {
                            let slope = if !y {
                                -1.0
                            } else if cv - margin > 0.0 {
                                1.0
                            } else {
                                0.0
                            };
                            up * slope / n
                        })
                        .collect();
                    send(*c, Tensor::from_vec(cos.rows(), 1, d)?)?;
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    send(*a, Tensor::filled(x.rows(), x.cols(), g.get(0, 0)))?;
                }
            }
        }
        let param_ids = self
            .nodes
            .iter()
            .map(|n| match n.op {
                Op::Param(id) => Some(id),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, param_ids })
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    param_ids: Vec<Option<usize>>,
}

impl Gradients {
    /// Gradient for a node, if one reached it.
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds every parameter-leaf gradient into `params[id]`.
    pub fn accumulate(&self, params: &mut [&mut Parameter]) -> Result<()> {
        for (g, id) in self.grads.iter().zip(&self.param_ids) {
            if let (Some(g), Some(id)) = (g, id) {
                let p = params.get_mut(*id).ok_or_else(|| {
                    ArcError::invalid(format!("gradient for unknown parameter {id}"))
                })?;
                p.add_grad(g)?;
            }
        }
        Ok(())
    }
}
