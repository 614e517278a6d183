//! Eager reverse-mode tape.
//!
//! Every operation computes its value immediately and appends a node holding
//! its inputs and whatever it needs for the backward pass. Node ids are
//! assigned in creation order, which is a topological order, so `backward`
//! walks the node list once in reverse.

use crate::conv::{self, ConvGeometry, Padding};
use crate::error::{AutodiffError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Probabilities fed to the cross-entropy losses are clamped to
/// `[LOG_CLAMP, 1 - LOG_CLAMP]`.
pub const LOG_CLAMP: f64 = 1e-7;

pub const BATCH_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        geom: ConvGeometry,
        cols: Vec<T>,
    },
    ConvTranspose2d {
        input: Var,
        kernel: Var,
        geom: ConvGeometry,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Relu {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Reshape {
        x: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    SpatialMean {
        x: Var,
    },
    Mean {
        x: Var,
    },
    Sum {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: T,
    },
    L1 {
        a: Var,
        b: Var,
    },
    BceD {
        real: Var,
        fake: Var,
    },
    BceG {
        fake: Var,
    },
    LsD {
        real: Var,
        fake: Var,
    },
    LsG {
        fake: Var,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A single forward/backward context.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    consumed: bool,
    kinks: Vec<bool>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn clamp_prob<T: Scalar>(p: T) -> (T, bool) {
    let lo = T::from_f64(LOG_CLAMP);
    let hi = T::one() - lo;
    if p < lo {
        (lo, false)
    } else if p > hi {
        (hi, false)
    } else {
        (p, true)
    }
}

fn mean_of<T: Scalar>(xs: impl Iterator<Item = T>, n: usize) -> T {
    xs.fold(T::zero(), |a, b| a + b) / T::from_f64(n as f64)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
            kinks: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input tensor. Leaves with `requires_grad` receive gradients on `backward`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Gradient of the last `backward` loss w.r.t. a leaf.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.shape(v).to_vec(), g.clone()).expect("grad shape"))
    }

    /// Sign pattern of every non-smooth point visited during the forward pass
    /// (activation inputs, L1 residuals, probability clamps). Two evaluations
    /// with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> &[bool] {
        &self.kinks
    }

    // ---------------------------------------------------------------- convs

    /// Cross-correlation of an `N×H×W×Cin` input with a `kh×kw×Cin×Cout` kernel.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: (usize, usize), pad: Padding) -> Result<Var> {
        let geom = self.conv_geometry(input, kernel, stride, pad, false)?;
        let needs = self.rg(input) || self.rg(kernel);
        let (out, cols) = conv::conv_forward(&geom, self.value(input).data(), self.value(kernel).data());
        let value = Tensor::new(vec![geom.n, geom.oh, geom.ow, geom.cout], out)?;
        let cols = if self.rg(kernel) { cols } else { Vec::new() };
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                geom,
                cols,
            },
            needs,
        ))
    }

    /// Transposed convolution: the adjoint of [`Graph::conv2d`] with the same
    /// kernel, stride and padding. The output extent is `H·stride × W·stride`;
    /// the kernel is `kh×kw×Cout×Cin` where `Cin` is this op's input depth.
    pub fn conv2d_transpose(&mut self, input: Var, kernel: Var, stride: (usize, usize), pad: Padding) -> Result<Var> {
        let geom = self.conv_geometry(input, kernel, stride, pad, true)?;
        let needs = self.rg(input) || self.rg(kernel);
        let out = conv::conv_input_grad(&geom, self.value(input).data(), self.value(kernel).data());
        let value = Tensor::new(vec![geom.n, geom.h, geom.w, geom.cin], out)?;
        Ok(self.push(value, Op::ConvTranspose2d { input, kernel, geom }, needs))
    }

    fn conv_geometry(
        &self,
        input: Var,
        kernel: Var,
        stride: (usize, usize),
        pad: Padding,
        transpose: bool,
    ) -> Result<ConvGeometry> {
        let xs = self.shape(input);
        let ks = self.shape(kernel);
        if xs.len() != 4 || ks.len() != 4 {
            return Err(AutodiffError::Shape(format!(
                "conv expects rank-4 input and kernel, got {:?} and {:?}",
                xs, ks
            )));
        }
        let (n, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
        let (kh, kw, k_in, k_out) = (ks[0], ks[1], ks[2], ks[3]);
        let bad = || AutodiffError::Shape(format!("kernel {:?} does not fit input {:?} with padding {:?}", ks, xs, pad));
        if transpose {
            if c != k_out {
                return Err(AutodiffError::ChannelMismatch { input: c, kernel: k_out });
            }
            let g = ConvGeometry::new(n, h * stride.0, w * stride.1, k_in, kh, kw, k_out, stride, pad).ok_or_else(bad)?;
            if g.oh != h || g.ow != w {
                return Err(AutodiffError::Shape(format!(
                    "transposed conv of {:?} with stride {:?} and padding {:?} is not invertible in shape",
                    xs, stride, pad
                )));
            }
            Ok(g)
        } else {
            if c != k_in {
                return Err(AutodiffError::ChannelMismatch { input: c, kernel: k_in });
            }
            ConvGeometry::new(n, h, w, c, kh, kw, k_out, stride, pad).ok_or_else(bad)
        }
    }

    /// 1D convolution of `N×T×Cin` with a `k×Cin×Cout` kernel.
    pub fn conv1d(&mut self, input: Var, kernel: Var, stride: usize, pad: (usize, usize)) -> Result<Var> {
        let (x4, k4) = self.lift_1d(input, kernel)?;
        let pad = Padding {
            top: 0,
            bottom: 0,
            left: pad.0,
            right: pad.1,
        };
        let y = self.conv2d(x4, k4, (1, stride), pad)?;
        self.squeeze_1d(y)
    }

    /// 1D transposed convolution, adjoint of [`Graph::conv1d`]; kernel `k×Cout×Cin`.
    pub fn conv1d_transpose(&mut self, input: Var, kernel: Var, stride: usize, pad: (usize, usize)) -> Result<Var> {
        let (x4, k4) = self.lift_1d(input, kernel)?;
        let pad = Padding {
            top: 0,
            bottom: 0,
            left: pad.0,
            right: pad.1,
        };
        let y = self.conv2d_transpose(x4, k4, (1, stride), pad)?;
        self.squeeze_1d(y)
    }

    fn lift_1d(&mut self, input: Var, kernel: Var) -> Result<(Var, Var)> {
        let xs = self.shape(input).to_vec();
        let ks = self.shape(kernel).to_vec();
        if xs.len() != 3 || ks.len() != 3 {
            return Err(AutodiffError::Shape(format!(
                "conv1d expects rank-3 input and kernel, got {:?} and {:?}",
                xs, ks
            )));
        }
        let x4 = self.reshape(input, &[xs[0], 1, xs[1], xs[2]])?;
        let k4 = self.reshape(kernel, &[1, ks[0], ks[1], ks[2]])?;
        Ok((x4, k4))
    }

    fn squeeze_1d(&mut self, y: Var) -> Result<Var> {
        let s = self.shape(y).to_vec();
        self.reshape(y, &[s[0], s[2], s[3]])
    }

    // ------------------------------------------------------------ pointwise

    /// Adds a per-channel bias (last axis).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap_or(&0);
        if self.shape(bias) != [c] {
            return Err(AutodiffError::Shape(format!(
                "bias {:?} does not match channel count {}",
                self.shape(bias),
                c
            )));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).clone();
        for chunk in out.data_mut().chunks_mut(c) {
            for (v, bb) in chunk.iter_mut().zip(&b) {
                *v += *bb;
            }
        }
        let needs = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddBias { x, bias }, needs))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let slope = T::from_f64(slope);
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            let pos = *v > T::zero();
            self.kinks.push(pos);
            if !pos {
                *v *= slope;
            }
        }
        let needs = self.rg(x);
        self.push(out, Op::LeakyRelu { x, slope }, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            let pos = *v > T::zero();
            self.kinks.push(pos);
            if !pos {
                *v = T::zero();
            }
        }
        let needs = self.rg(x);
        self.push(out, Op::Relu { x }, needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        let needs = self.rg(x);
        self.push(out, Op::Tanh { x }, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = T::one() / (T::one() + (-*v).exp()));
        let needs = self.rg(x);
        self.push(out, Op::Sigmoid { x }, needs)
    }

    /// Concatenates along the last (channel) axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(AutodiffError::Shape(format!("cannot concat {:?} with {:?}", sa, sb)));
        }
        let ca = *sa.last().unwrap();
        let cb = *sb.last().unwrap();
        let rows: usize = sa[..sa.len() - 1].iter().product();
        let mut data = Vec::with_capacity(rows * (ca + cb));
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for r in 0..rows {
            data.extend_from_slice(&da[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&db[r * cb..(r + 1) * cb]);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = ca + cb;
        let needs = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat { a, b }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() {
            return Err(AutodiffError::Shape(format!(
                "cannot reshape {:?} to {:?}",
                self.shape(x),
                shape
            )));
        }
        let value = self.value(x).clone().with_shape(shape.to_vec());
        let needs = self.rg(x);
        Ok(self.push(value, Op::Reshape { x }, needs))
    }

    /// Batch normalization with batch statistics, per channel (last axis).
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let c = *self.shape(x).last().unwrap_or(&0);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(AutodiffError::Shape(format!(
                "batch norm scale/shift must be [{}], got {:?} and {:?}",
                c,
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let xv = self.value(x).data();
        let m = xv.len() / c.max(1);
        let mf = T::from_f64(m as f64);
        let mut mean = vec![T::zero(); c];
        for row in xv.chunks(c) {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += *v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= mf);
        let mut var = vec![T::zero(); c];
        for row in xv.chunks(c) {
            for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                let d = *v - *mu;
                *acc += d * d;
            }
        }
        let eps = T::from_f64(BATCH_NORM_EPS);
        let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v / mf + eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(xv.len());
        for row in xv.chunks(c) {
            for ch in 0..c {
                xhat.push((row[ch] - mean[ch]) * inv_std[ch]);
            }
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut out = Vec::with_capacity(xhat.len());
        for row in xhat.chunks(c) {
            for ch in 0..c {
                out.push(row[ch] * g[ch] + b[ch]);
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        let needs = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    // ----------------------------------------------------------- reductions

    /// Averages `N×…×C` over every axis except the first and last, giving `N×C`.
    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(AutodiffError::Shape(format!("spatial mean needs rank ≥ 2, got {:?}", s)));
        }
        let (n, c) = (s[0], s[s.len() - 1]);
        let spatial = self.value(x).len() / (n * c).max(1);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); n * c];
        for b in 0..n {
            for p in 0..spatial {
                for ch in 0..c {
                    out[b * c + ch] += xv[(b * spatial + p) * c + ch];
                }
            }
        }
        let sf = T::from_f64(spatial as f64);
        out.iter_mut().for_each(|v| *v /= sf);
        let needs = self.rg(x);
        Ok(self.push(Tensor::new(vec![n, c], out)?, Op::SpatialMean { x }, needs))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let m = mean_of(self.value(x).data().iter().copied(), n);
        let needs = self.rg(x);
        self.push(Tensor::scalar(m), Op::Mean { x }, needs)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |a, b| a + *b);
        let needs = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::Shape(format!(
                "cannot add {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = self.value(a).clone();
        for (v, w) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *v += *w;
        }
        let needs = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add { a, b }, needs))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let factor = T::from_f64(factor);
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= factor);
        let needs = self.rg(x);
        self.push(out, Op::Scale { x, factor }, needs)
    }

    // --------------------------------------------------------------- losses

    /// Mean absolute error.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(AutodiffError::Shape(format!(
                "l1 operands differ: {:?} vs {:?}",
                self.shape(pred),
                self.shape(target)
            )));
        }
        let n = self.value(pred).len();
        let mut acc = T::zero();
        for (p, t) in self.value(pred).data().iter().zip(self.value(target).data()) {
            acc += (*p - *t).abs();
        }
        let signs: Vec<bool> = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(p, t)| p > t)
            .collect();
        self.kinks.extend(signs);
        let needs = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(acc / T::from_f64(n as f64)), Op::L1 { a: pred, b: target }, needs))
    }

    /// Discriminator cross-entropy: `−mean log D_real − mean log(1 − D_fake)`.
    pub fn gan_bce_d(&mut self, real: Var, fake: Var) -> Var {
        let nr = self.value(real).len();
        let nf = self.value(fake).len();
        let mut kinks = Vec::with_capacity(nr + nf);
        let lr = mean_of(
            self.value(real).data().iter().map(|&p| {
                let (p, inside) = clamp_prob(p);
                kinks.push(inside);
                -p.ln()
            }),
            nr,
        );
        let lf = mean_of(
            self.value(fake).data().iter().map(|&p| {
                let (p, inside) = clamp_prob(p);
                kinks.push(inside);
                -(T::one() - p).ln()
            }),
            nf,
        );
        self.kinks.extend(kinks);
        let needs = self.rg(real) || self.rg(fake);
        self.push(Tensor::scalar(lr + lf), Op::BceD { real, fake }, needs)
    }

    /// Non-saturating generator cross-entropy: `−mean log D_fake`.
    pub fn gan_bce_g(&mut self, fake: Var) -> Var {
        let n = self.value(fake).len();
        let mut kinks = Vec::with_capacity(n);
        let l = mean_of(
            self.value(fake).data().iter().map(|&p| {
                let (p, inside) = clamp_prob(p);
                kinks.push(inside);
                -p.ln()
            }),
            n,
        );
        self.kinks.extend(kinks);
        let needs = self.rg(fake);
        self.push(Tensor::scalar(l), Op::BceG { fake }, needs)
    }

    /// Least-squares discriminator loss: `½ mean (D_real − 1)² + ½ mean D_fake²`.
    pub fn lsgan_d(&mut self, real: Var, fake: Var) -> Var {
        let half = T::from_f64(0.5);
        let nr = self.value(real).len();
        let nf = self.value(fake).len();
        let lr = mean_of(self.value(real).data().iter().map(|&d| (d - T::one()) * (d - T::one())), nr);
        let lf = mean_of(self.value(fake).data().iter().map(|&d| d * d), nf);
        let needs = self.rg(real) || self.rg(fake);
        self.push(Tensor::scalar(half * (lr + lf)), Op::LsD { real, fake }, needs)
    }

    /// Least-squares generator loss: `½ mean (D_fake − 1)²`.
    pub fn lsgan_g(&mut self, fake: Var) -> Var {
        let n = self.value(fake).len();
        let l = mean_of(self.value(fake).data().iter().map(|&d| (d - T::one()) * (d - T::one())), n);
        let needs = self.rg(fake);
        self.push(Tensor::scalar(T::from_f64(0.5) * l), Op::LsG { fake }, needs)
    }

    // ------------------------------------------------------------- backward

    /// Populates gradients of `loss` w.r.t. every leaf created with
    /// `requires_grad`. The graph can be differentiated only once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(AutodiffError::GraphConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (input, contribution) in self.node_backward(i, &g) {
                if !self.rg(input) {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += *c),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        // Only leaf gradients are kept.
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn node_backward(&self, i: usize, g: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[i];
        let val = |v: Var| self.value(v).data();
        match &node.op {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                kernel,
                geom,
                cols,
            } => {
                let mut out = Vec::new();
                if self.rg(*input) {
                    out.push((*input, conv::conv_input_grad(geom, g, val(*kernel))));
                }
                if self.rg(*kernel) {
                    out.push((*kernel, conv::conv_kernel_grad(geom, cols, g)));
                }
                out
            }
            Op::ConvTranspose2d { input, kernel, geom } => {
                // Forward was y = conv_inputᵀ(x); its adjoint is the forward conv.
                let mut out = Vec::new();
                let (dx, gcols) = conv::conv_forward(geom, g, val(*kernel));
                if self.rg(*input) {
                    out.push((*input, dx));
                }
                if self.rg(*kernel) {
                    out.push((*kernel, conv::conv_kernel_grad(geom, &gcols, val(*input))));
                }
                out
            }
            Op::AddBias { x, bias } => {
                let c = self.shape(*bias)[0];
                let mut db = vec![T::zero(); c];
                for row in g.chunks(c) {
                    for (a, v) in db.iter_mut().zip(row) {
                        *a += *v;
                    }
                }
                vec![(*x, g.to_vec()), (*bias, db)]
            }
            Op::LeakyRelu { x, slope } => {
                let dx = val(*x)
                    .iter()
                    .zip(g)
                    .map(|(xv, gv)| if *xv > T::zero() { *gv } else { *gv * *slope })
                    .collect();
                vec![(*x, dx)]
            }
            Op::Relu { x } => {
                let dx = val(*x)
                    .iter()
                    .zip(g)
                    .map(|(xv, gv)| if *xv > T::zero() { *gv } else { T::zero() })
                    .collect();
                vec![(*x, dx)]
            }
            Op::Tanh { x } => {
                let y = node.value.data();
                let dx = y.iter().zip(g).map(|(yv, gv)| *gv * (T::one() - *yv * *yv)).collect();
                vec![(*x, dx)]
            }
            Op::Sigmoid { x } => {
                let y = node.value.data();
                let dx = y.iter().zip(g).map(|(yv, gv)| *gv * *yv * (T::one() - *yv)).collect();
                vec![(*x, dx)]
            }
            Op::Concat { a, b } => {
                let ca = *self.shape(*a).last().unwrap();
                let cb = *self.shape(*b).last().unwrap();
                let mut ga = Vec::with_capacity(self.value(*a).len());
                let mut gb = Vec::with_capacity(self.value(*b).len());
                for row in g.chunks(ca + cb) {
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::Reshape { x } => vec![(*x, g.to_vec())],
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = inv_std.len();
                let m = xhat.len() / c;
                let gam = val(*gamma);
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for (row_g, row_x) in g.chunks(c).zip(xhat.chunks(c)) {
                    for ch in 0..c {
                        dgamma[ch] += row_g[ch] * row_x[ch];
                        dbeta[ch] += row_g[ch];
                    }
                }
                let mf = T::from_f64(m as f64);
                let mut dx = Vec::with_capacity(xhat.len());
                for (row_g, row_x) in g.chunks(c).zip(xhat.chunks(c)) {
                    for ch in 0..c {
                        // dxhat = g·γ; Σdxhat = γ·dβ; Σ dxhat·xhat = γ·dγ
                        let dxh = row_g[ch] * gam[ch];
                        let v = (mf * dxh - gam[ch] * dbeta[ch] - row_x[ch] * gam[ch] * dgamma[ch]) * inv_std[ch] / mf;
                        dx.push(v);
                    }
                }
                vec![(*x, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::SpatialMean { x } => {
                let s = self.shape(*x);
                let (n, c) = (s[0], s[s.len() - 1]);
                let spatial = self.value(*x).len() / (n * c).max(1);
                let sf = T::from_f64(spatial as f64);
                let mut dx = vec![T::zero(); self.value(*x).len()];
                for b in 0..n {
                    for p in 0..spatial {
                        for ch in 0..c {
                            dx[(b * spatial + p) * c + ch] = g[b * c + ch] / sf;
                        }
                    }
                }
                vec![(*x, dx)]
            }
            Op::Mean { x } => {
                let n = self.value(*x).len();
                vec![(*x, vec![g[0] / T::from_f64(n as f64); n])]
            }
            Op::Sum { x } => vec![(*x, vec![g[0]; self.value(*x).len()])],
            Op::Add { a, b } => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Scale { x, factor } => vec![(*x, g.iter().map(|v| *v * *factor).collect())],
            Op::L1 { a, b } => {
                let n = T::from_f64(self.value(*a).len() as f64);
                let da: Vec<T> = val(*a)
                    .iter()
                    .zip(val(*b))
                    .map(|(p, t)| {
                        let d = *p - *t;
                        let s = if d > T::zero() {
                            T::one()
                        } else if d < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        g[0] * s / n
                    })
                    .collect();
                let db = da.iter().map(|v| -*v).collect();
                vec![(*a, da), (*b, db)]
            }
            Op::BceD { real, fake } => {
                let nr = T::from_f64(self.value(*real).len() as f64);
                let nf = T::from_f64(self.value(*fake).len() as f64);
                let dr = val(*real)
                    .iter()
                    .map(|&p| match clamp_prob(p) {
                        (p, true) => -g[0] / (nr * p),
                        _ => T::zero(),
                    })
                    .collect();
                let df = val(*fake)
                    .iter()
                    .map(|&p| match clamp_prob(p) {
                        (p, true) => g[0] / (nf * (T::one() - p)),
                        _ => T::zero(),
                    })
                    .collect();
                vec![(*real, dr), (*fake, df)]
            }
            Op::BceG { fake } => {
                let n = T::from_f64(self.value(*fake).len() as f64);
                let df = val(*fake)
                    .iter()
                    .map(|&p| match clamp_prob(p) {
                        (p, true) => -g[0] / (n * p),
                        _ => T::zero(),
                    })
                    .collect();
                vec![(*fake, df)]
            }
            Op::LsD { real, fake } => {
                let nr = T::from_f64(self.value(*real).len() as f64);
                let nf = T::from_f64(self.value(*fake).len() as f64);
                let dr = val(*real).iter().map(|&d| g[0] * (d - T::one()) / nr).collect();
                let df = val(*fake).iter().map(|&d| g[0] * d / nf).collect();
                vec![(*real, dr), (*fake, df)]
            }
            Op::LsG { fake } => {
                let n = T::from_f64(self.value(*fake).len() as f64);
                let df = val(*fake).iter().map(|&d| g[0] * (d - T::one()) / n).collect();
                vec![(*fake, df)]
            }
        }
    }
}
