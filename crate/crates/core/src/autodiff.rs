//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records primitive operations in creation order, so the node list
//! is always topologically sorted. [`Graph::backward`] walks it in reverse from
//! a scalar loss and returns a gradient for every node that requires one.
//!
//! Tensors layouts: images are `N×C×H×W`, convolution weights
//! `C_out×C_in×k_h×k_w`, dense weights `in×out`.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom};
use crate::par;
use crate::tensor::{Scalar, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        weight: Var,
        geom: ConvGeom,
        out_channels: usize,
        cols: Vec<Vec<T>>,
    },
    Add(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    GlobalAvgPool(Var),
    Reshape(Var),
    Scale(Var, T),
    Sum(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    SelectSum {
        logits: Var,
        classes: Vec<usize>,
    },
    SoftmaxSelectSum {
        logits: Var,
        classes: Vec<usize>,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

fn check_classes(classes: &[usize], n: usize, k: usize) -> Result<()> {
    if classes.len() != n {
        return Err(mismatch("class selection", &[n], &[classes.len()]));
    }
    match classes.iter().find(|&&c| c >= k) {
        Some(&class) => Err(Error::ClassOutOfRange { class, classes: k }),
        None => Ok(()),
    }
}

fn softmax_rows<T: Scalar>(logits: &[T], n: usize, k: usize) -> Vec<T> {
    let mut probs = vec![T::zero(); n * k];
    for i in 0..n {
        let row = &logits[i * k..(i + 1) * k];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for (p, &l) in probs[i * k..(i + 1) * k].iter_mut().zip(row) {
            *p = (l - max).exp();
            z += *p;
        }
        for p in &mut probs[i * k..(i + 1) * k] {
            *p /= z;
        }
    }
    probs
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Input tensor. Gradients are produced only when `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// `[m, k] · [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// 2-D convolution, no bias. `x: [N, C, H, W]`, `w: [O, C, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || stride == 0 {
            return Err(mismatch("conv2d", sx, sw));
        }
        let geom = ConvGeom {
            channels: sx[1],
            height: sx[2],
            width: sx[3],
            kernel_h: sw[2],
            kernel_w: sw[3],
            stride,
            pad,
        };
        if sx[2] + 2 * pad < sw[2] || sx[3] + 2 * pad < sw[3] {
            return Err(mismatch("conv2d", sx, sw));
        }
        let (n, o) = (sx[0], sw[0]);
        let (k, p) = (geom.patch_len(), geom.positions());
        let sample = geom.channels * geom.height * geom.width;
        let keep_cols = self.requires_grad(w);
        let xs = self.value(x).data();
        let ws = self.value(w).data();
        let per_sample = par::map_range(n, |i| {
            let cols = kernels::im2col(&xs[i * sample..(i + 1) * sample], &geom);
            let out = kernels::matmul(ws, &cols, o, k, p);
            (out, if keep_cols { cols } else { Vec::new() })
        });
        let mut out = Vec::with_capacity(n * o * p);
        let mut cols = Vec::with_capacity(if keep_cols { n } else { 0 });
        for (y, c) in per_sample {
            out.extend_from_slice(&y);
            if keep_cols {
                cols.push(c);
            }
        }
        let rg = self.requires_grad(x) || self.requires_grad(w);
        let value = Tensor::new(vec![n, o, geom.out_h(), geom.out_w()], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input: x,
                weight: w,
                geom,
                out_channels: o,
                cols,
            },
            rg,
        ))
    }

    /// Elementwise sum of equal shapes (also used for residual skips).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("add", self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Adds `b[c]` to channel `c` of `x: [N, C, ...]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sx.len() < 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(mismatch("add_bias", sx, sb));
        }
        let c = sx[1];
        let inner: usize = sx[2..].iter().product();
        let bias = self.value(b).data();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bias[(i / inner) % c])
            .collect();
        let value = Tensor::new(sx.to_vec(), data)?;
        let rg = self.requires_grad(x) || self.requires_grad(b);
        Ok(self.push(value, Op::AddBias(x, b), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.requires_grad(x);
        self.push(value, Op::Relu(x), rg)
    }

    /// `[N, C, H, W] → [N, C]`, mean over the spatial positions.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 4 {
            return Err(mismatch("global_avg_pool", sx, &[0, 0, 0, 0]));
        }
        let (n, c, hw) = (sx[0], sx[1], sx[2] * sx[3]);
        let scale = T::from_f64(1.0 / hw as f64);
        let data = self
            .value(x)
            .data()
            .chunks(hw)
            .map(|plane| plane.iter().copied().sum::<T>() * scale)
            .collect();
        let value = Tensor::new(vec![n, c], data)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, Op::GlobalAvgPool(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        let rg = self.requires_grad(x);
        self.push(value, Op::Scale(x, c), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.requires_grad(x);
        self.push(value, Op::Sum(x), rg)
    }

    /// Mean softmax cross-entropy of `logits: [N, K]` against `labels`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let sl = self.shape(logits);
        if sl.len() != 2 || sl[1] == 0 {
            return Err(mismatch("softmax_cross_entropy", sl, &[labels.len(), 0]));
        }
        let (n, k) = (sl[0], sl[1]);
        check_classes(labels, n, k)?;
        let probs = softmax_rows(self.value(logits).data(), n, k);
        let logits_data = self.value(logits).data();
        let mut loss = 0.0f64;
        for (i, &y) in labels.iter().enumerate() {
            let row = &logits_data[i * k..(i + 1) * k];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max).as_f64();
            let lse = max
                + row
                    .iter()
                    .map(|&v| (v.as_f64() - max).exp())
                    .sum::<f64>()
                    .ln();
            loss += lse - row[y].as_f64();
        }
        let value = Tensor::scalar(T::from_f64(loss / n as f64));
        let rg = self.requires_grad(logits);
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `Σ_n logits[n, classes[n]]`. Samples are independent, so the gradient
    /// with respect to a batched input is the per-sample logit gradient.
    pub fn select_sum(&mut self, logits: Var, classes: &[usize]) -> Result<Var> {
        let sl = self.shape(logits);
        if sl.len() != 2 {
            return Err(mismatch("select_sum", sl, &[classes.len(), 0]));
        }
        let (n, k) = (sl[0], sl[1]);
        check_classes(classes, n, k)?;
        let data = self.value(logits).data();
        let total = classes
            .iter()
            .enumerate()
            .map(|(i, &c)| data[i * k + c])
            .sum();
        let rg = self.requires_grad(logits);
        Ok(self.push(
            Tensor::scalar(total),
            Op::SelectSum {
                logits,
                classes: classes.to_vec(),
            },
            rg,
        ))
    }

    /// `Σ_n softmax(logits[n])[classes[n]]`.
    pub fn softmax_select_sum(&mut self, logits: Var, classes: &[usize]) -> Result<Var> {
        let sl = self.shape(logits);
        if sl.len() != 2 {
            return Err(mismatch("softmax_select_sum", sl, &[classes.len(), 0]));
        }
        let (n, k) = (sl[0], sl[1]);
        check_classes(classes, n, k)?;
        let probs = softmax_rows(self.value(logits).data(), n, k);
        let total = classes
            .iter()
            .enumerate()
            .map(|(i, &c)| probs[i * k + c])
            .sum();
        let rg = self.requires_grad(logits);
        Ok(self.push(
            Tensor::scalar(total),
            Op::SoftmaxSelectSum {
                logits,
                classes: classes.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
            if !node.requires_grad {
                grads[idx] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.requires_grad(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(
        &self,
        node: &Node<T>,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.requires_grad(*a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![T::zero(); m * k];
                    kernels::matmul_nt_acc(gd, self.value(*b).data(), m, n, k, &mut da);
                    self.accumulate(grads, *a, Tensor::new(sa.to_vec(), da)?);
                }
                if self.requires_grad(*b) {
                    // dB = Aᵀ · dC
                    let db = kernels::matmul_tn(self.value(*a).data(), gd, m, k, n);
                    self.accumulate(grads, *b, Tensor::new(sb.to_vec(), db)?);
                }
            }
            Op::Conv2d {
                input,
                weight,
                geom,
                out_channels,
                cols,
            } => {
                let n = self.shape(*input)[0];
                let (o, k, p) = (*out_channels, geom.patch_len(), geom.positions());
                if self.requires_grad(*weight) {
                    let partials = par::map_range(n, |i| {
                        let mut dw = vec![T::zero(); o * k];
                        kernels::matmul_nt_acc(&gd[i * o * p..(i + 1) * o * p], &cols[i], o, p, k, &mut dw);
                        dw
                    });
                    let mut dw = vec![T::zero(); o * k];
                    for part in partials {
                        for (a, b) in dw.iter_mut().zip(part) {
                            *a += b;
                        }
                    }
                    let shape = self.shape(*weight).to_vec();
                    self.accumulate(grads, *weight, Tensor::new(shape, dw)?);
                }
                if self.requires_grad(*input) {
                    let sample = geom.channels * geom.height * geom.width;
                    let w = self.value(*weight).data();
                    let mut dx = vec![T::zero(); n * sample];
                    par::for_each_chunk_mut(&mut dx, sample, |i, out| {
                        let dcols = kernels::matmul_tn(w, &gd[i * o * p..(i + 1) * o * p], o, k, p);
                        kernels::col2im(&dcols, geom, out);
                    });
                    let shape = self.shape(*input).to_vec();
                    self.accumulate(grads, *input, Tensor::new(shape, dx)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, g.clone());
                if self.requires_grad(*b) {
                    let sx = self.shape(*x);
                    let c = sx[1];
                    let inner: usize = sx[2..].iter().product();
                    let mut db = vec![T::zero(); c];
                    for (i, &v) in gd.iter().enumerate() {
                        db[(i / inner) % c] += v;
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![c], db)?);
                }
            }
            Op::Relu(x) => {
                let out = node.value.data();
                let data = gd
                    .iter()
                    .zip(out)
                    .map(|(&gv, &y)| if y > T::zero() { gv } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(node.value.shape().to_vec(), data)?);
            }
            Op::GlobalAvgPool(x) => {
                let sx = self.shape(*x);
                let hw = sx[2] * sx[3];
                let scale = T::from_f64(1.0 / hw as f64);
                let data = gd
                    .iter()
                    .flat_map(|&v| std::iter::repeat_n(v * scale, hw))
                    .collect();
                self.accumulate(grads, *x, Tensor::new(sx.to_vec(), data)?);
            }
            Op::Reshape(x) => {
                let shape = self.shape(*x).to_vec();
                self.accumulate(grads, *x, g.clone().reshape(shape)?);
            }
            Op::Scale(x, c) => {
                self.accumulate(grads, *x, g.map(|v| v * *c));
            }
            Op::Sum(x) => {
                let seed = gd[0];
                self.accumulate(grads, *x, Tensor::full(self.shape(*x), seed));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                let n = labels.len();
                let scale = gd[0] / T::from_f64(n as f64);
                let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (i, &y) in labels.iter().enumerate() {
                    d[i * k + y] -= scale;
                }
                self.accumulate(grads, *logits, Tensor::new(vec![n, k], d)?);
            }
            Op::SelectSum { logits, classes } => {
                let k = self.shape(*logits)[1];
                let mut d = vec![T::zero(); classes.len() * k];
                for (i, &c) in classes.iter().enumerate() {
                    d[i * k + c] = gd[0];
                }
                self.accumulate(grads, *logits, Tensor::new(vec![classes.len(), k], d)?);
            }
            Op::SoftmaxSelectSum {
                logits,
                classes,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                let mut d = vec![T::zero(); classes.len() * k];
                for (i, &c) in classes.iter().enumerate() {
                    let pc = probs[i * k + c];
                    for j in 0..k {
                        let delta = if j == c { T::one() } else { T::zero() };
                        d[i * k + j] = gd[0] * pc * (delta - probs[i * k + j]);
                    }
                }
                self.accumulate(grads, *logits, Tensor::new(vec![classes.len(), k], d)?);
            }
        }
        Ok(())
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = g.constant(t(&[2, 1], &[3.0, 4.0]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 4.0]);
        assert_eq!(g.value(c).shape(), &[2, 1]);
    }

    #[test]
    fn matmul_shape_error_reports_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        match g.matmul(a, b) {
            Err(Error::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 3]);
            }
            other => panic!("expected mismatch, got {:?}", other.map(|v| v.index())),
        }
    }

    #[test]
    fn relu_definition() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn one_by_one_unit_kernel_is_identity() {
        let img: Vec<f64> = (0..9).map(|v| v as f64 * 0.5 - 1.0).collect();
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 1, 3, 3], &img));
        let w = g.constant(t(&[1, 1, 1, 1], &[1.0]));
        let y = g.conv2d(x, w, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &img[..]);
    }

    #[test]
    fn linear_gradient_is_weight() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3, 1], &[0.3, -2.0, 7.0]), true);
        let w = g.constant(t(&[1, 3], &[1.5, -0.5, 2.0]));
        let y = g.matmul(w, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.5, -0.5, 2.0]);
    }

    #[test]
    fn relu_sum_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[-1.0, 2.0]), true);
        let r = g.relu(x);
        let s = g.sum(r);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true);
        let r = g.relu(x);
        assert!(matches!(g.backward(r), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true);
        let unused = g.leaf(t(&[2, 2], &[1.0; 4]), true);
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0; 4]);
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let mut g = Graph::new();
        let l = g.leaf(Tensor::<f64>::zeros(&[2, 4]), true);
        let loss = g.softmax_cross_entropy(l, &[0, 3]).unwrap();
        assert!((g.value(loss).item().unwrap() - 4f64.ln()).abs() < 1e-12);
        let grads = g.backward(loss).unwrap();
        let d = grads.get(l).unwrap().data();
        assert!((d[0] - (0.25 - 1.0) / 2.0).abs() < 1e-12);
        assert!((d[1] - 0.125).abs() < 1e-12);
    }

    #[test]
    fn invalid_class_rejected() {
        let mut g = Graph::<f64>::new();
        let l = g.constant(Tensor::zeros(&[1, 3]));
        assert!(matches!(
            g.select_sum(l, &[3]),
            Err(Error::ClassOutOfRange { class: 3, classes: 3 })
        ));
    }
}
