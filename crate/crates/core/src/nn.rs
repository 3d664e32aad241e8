//! A small static-graph CNN engine: 3x3/1x1 same-padded convolutions,
//! ReLU, 2x2 max-pooling, nearest 2x upsampling, channel concatenation and
//! sigmoid, with reverse-mode gradients for parameters and for the input.
//!
//! Tensors hold a single sample in channel-major (`C, H, W`) order. Batches
//! are handled by the training loops, which accumulate per-sample gradients.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor data length mismatch");
        Self { channels, height, width, data }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    /// Same shape, new contents.
    fn with_data(&self, data: Vec<f32>) -> Tensor {
        Tensor::from_vec(self.channels, self.height, self.width, data)
    }

    fn same_shape(&self, other: &Tensor) -> bool {
        (self.channels, self.height, self.width) == (other.channels, other.height, other.width)
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Input,
    Conv { layer: usize },
    Relu,
    MaxPool,
    Upsample,
    Concat,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub op: Op,
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// Start of this layer's weights in the flat parameter vector; the bias follows.
    pub offset: usize,
}

impl ConvSpec {
    fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.weight_len()
    }

    fn len(&self) -> usize {
        self.weight_len() + self.out_channels
    }
}

/// Handle to a node while a graph is being built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Incrementally assembles a [`Network`]. Nodes are appended in
/// topological order, which the backward pass relies on.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    convs: Vec<ConvSpec>,
    channels: Vec<usize>,
    scale: Vec<usize>,
    param_len: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, channels: usize, scale: usize) -> NodeId {
        self.nodes.push(Node { op, inputs });
        self.channels.push(channels);
        self.scale.push(scale);
        NodeId(self.nodes.len() - 1)
    }

    pub fn channels(&self, x: NodeId) -> usize {
        self.channels[x.0]
    }

    pub fn input(&mut self, channels: usize) -> NodeId {
        assert!(self.nodes.is_empty(), "input must be the first node");
        self.push(Op::Input, vec![], channels, 1)
    }

    pub fn conv(&mut self, x: NodeId, out_channels: usize, kernel: usize) -> NodeId {
        assert!(kernel == 1 || kernel == 3, "only 1x1 and 3x3 kernels are supported");
        let spec = ConvSpec { in_channels: self.channels[x.0], out_channels, kernel, offset: self.param_len };
        self.param_len += spec.len();
        self.convs.push(spec);
        let layer = self.convs.len() - 1;
        let scale = self.scale[x.0];
        self.push(Op::Conv { layer }, vec![x.0], out_channels, scale)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let (c, s) = (self.channels[x.0], self.scale[x.0]);
        self.push(Op::Relu, vec![x.0], c, s)
    }

    /// 3x3 convolution followed by ReLU.
    pub fn conv_relu(&mut self, x: NodeId, out_channels: usize) -> NodeId {
        let c = self.conv(x, out_channels, 3);
        self.relu(c)
    }

    pub fn max_pool(&mut self, x: NodeId) -> NodeId {
        let (c, s) = (self.channels[x.0], self.scale[x.0]);
        self.push(Op::MaxPool, vec![x.0], c, s * 2)
    }

    pub fn upsample(&mut self, x: NodeId) -> NodeId {
        let (c, s) = (self.channels[x.0], self.scale[x.0]);
        assert!(s >= 2, "cannot upsample above input resolution");
        self.push(Op::Upsample, vec![x.0], c, s / 2)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.scale[a.0], self.scale[b.0], "concat operands differ in resolution");
        let c = self.channels[a.0] + self.channels[b.0];
        let s = self.scale[a.0];
        self.push(Op::Concat, vec![a.0, b.0], c, s)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let (c, s) = (self.channels[x.0], self.scale[x.0]);
        self.push(Op::Sigmoid, vec![x.0], c, s)
    }

    /// Freeze the graph with `output` as its result and He-normal weights.
    pub fn finish(self, output: NodeId, seed: u64) -> Network {
        assert_eq!(self.scale[output.0], 1, "network output must be at input resolution");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0f32; self.param_len];
        let out_layer = match self.nodes[output.0].op {
            Op::Conv { layer } => Some(layer),
            _ => self.nodes[output.0].inputs.first().and_then(|&i| match self.nodes[i].op {
                Op::Conv { layer } => Some(layer),
                _ => None,
            }),
        };
        for (i, c) in self.convs.iter().enumerate() {
            let fan_in = (c.in_channels * c.kernel * c.kernel) as f32;
            let gain = if Some(i) == out_layer { 1.0 } else { 2.0 };
            let normal = Normal::new(0.0, (gain / fan_in).sqrt()).expect("positive std");
            params[c.offset..c.offset + c.weight_len()].iter_mut().for_each(|w| *w = normal.sample(&mut rng));
        }
        let divisor = self.scale.iter().copied().max().unwrap_or(1);
        Network {
            in_channels: self.channels[0],
            out_channels: self.channels[output.0],
            nodes: self.nodes,
            convs: self.convs,
            output: output.0,
            divisor,
            params,
        }
    }
}

/// A frozen computation graph with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    convs: Vec<ConvSpec>,
    output: usize,
    divisor: usize,
    in_channels: usize,
    out_channels: usize,
    pub params: Vec<f32>,
}

fn gemm(alpha: f32, a: ArrayView2<f32>, b: ArrayView2<f32>, beta: f32, c: &mut ArrayViewMut2<f32>) {
    general_mat_mul(alpha, &a, &b, beta, c);
}

/// Unfold 3x3 zero-padded neighbourhoods into a `(C*9, H*W)` matrix.
fn im2col(x: &Tensor) -> Vec<f32> {
    let (c, h, w) = (x.channels, x.height, x.width);
    let hw = h * w;
    let mut cols = vec![0.0f32; c * 9 * hw];
    for ci in 0..c {
        let src = x.channel(ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let srow = &src[sy as usize * w..][..w];
                    let drow = &mut row[y * w..][..w];
                    match kx {
                        0 => drow[1..].copy_from_slice(&srow[..w - 1]),
                        1 => drow.copy_from_slice(srow),
                        _ => drow[..w - 1].copy_from_slice(&srow[1..]),
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: fold column gradients back into an image gradient.
fn col2im(cols: &[f32], c: usize, h: usize, w: usize) -> Tensor {
    let hw = h * w;
    let mut out = Tensor::zeros(c, h, w);
    for ci in 0..c {
        let dst = &mut out.data[ci * hw..][..hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[sy as usize * w..][..w];
                    let srow = &row[y * w..][..w];
                    match kx {
                        0 => drow[..w - 1].iter_mut().zip(&srow[1..]).for_each(|(d, s)| *d += s),
                        1 => drow.iter_mut().zip(srow).for_each(|(d, s)| *d += s),
                        _ => drow[1..].iter_mut().zip(&srow[..w - 1]).for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
    out
}

impl Network {
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    /// Spatial sizes must be multiples of this (the total pooling factor).
    pub fn size_divisor(&self) -> usize {
        self.divisor
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels != self.in_channels {
            return Err(Error::Shape(format!("expected {} input channels, got {}", self.in_channels, x.channels)));
        }
        if x.height == 0 || x.width == 0 || x.height % self.divisor != 0 || x.width % self.divisor != 0 {
            return Err(Error::Shape(format!(
                "input {}x{} is not a positive multiple of {}",
                x.height, x.width, self.divisor
            )));
        }
        Ok(())
    }

    fn conv_forward(&self, spec: &ConvSpec, x: &Tensor) -> Tensor {
        let hw = x.plane();
        let k2 = spec.kernel * spec.kernel;
        let weights = ArrayView2::from_shape((spec.out_channels, spec.in_channels * k2), &self.params[spec.offset..spec.bias_offset()])
            .expect("weight shape");
        let bias = &self.params[spec.bias_offset()..spec.bias_offset() + spec.out_channels];
        let mut out = Tensor::zeros(spec.out_channels, x.height, x.width);
        for (o, b) in bias.iter().enumerate() {
            out.data[o * hw..(o + 1) * hw].fill(*b);
        }
        let cols_owned;
        let cols: &[f32] = if spec.kernel == 3 {
            cols_owned = im2col(x);
            &cols_owned
        } else {
            &x.data
        };
        let cols = ArrayView2::from_shape((spec.in_channels * k2, hw), cols).expect("cols shape");
        let mut o = ArrayViewMut2::from_shape((spec.out_channels, hw), &mut out.data).expect("out shape");
        gemm(1.0, weights, cols, 1.0, &mut o);
        out
    }

    fn conv_backward(&self, spec: &ConvSpec, x: &Tensor, grad: &Tensor, param_grad: &mut [f32]) -> Tensor {
        let hw = x.plane();
        let k2 = spec.kernel * spec.kernel;
        let rows = spec.in_channels * k2;
        let cols_owned;
        let cols: &[f32] = if spec.kernel == 3 {
            cols_owned = im2col(x);
            &cols_owned
        } else {
            &x.data
        };
        let cols_v = ArrayView2::from_shape((rows, hw), cols).expect("cols shape");
        let g = ArrayView2::from_shape((spec.out_channels, hw), &grad.data).expect("grad shape");
        {
            let (wg, rest) = param_grad[spec.offset..].split_at_mut(spec.weight_len());
            let mut wg = ArrayViewMut2::from_shape((spec.out_channels, rows), wg).expect("wgrad shape");
            gemm(1.0, g, cols_v.t(), 1.0, &mut wg);
            for (o, bg) in rest[..spec.out_channels].iter_mut().enumerate() {
                *bg += grad.data[o * hw..(o + 1) * hw].iter().sum::<f32>();
            }
        }
        let weights = ArrayView2::from_shape((spec.out_channels, rows), &self.params[spec.offset..spec.bias_offset()])
            .expect("weight shape");
        let mut dcols = vec![0.0f32; rows * hw];
        {
            let mut d = ArrayViewMut2::from_shape((rows, hw), &mut dcols).expect("dcols shape");
            gemm(1.0, weights.t(), g, 0.0, &mut d);
        }
        if spec.kernel == 3 {
            col2im(&dcols, spec.in_channels, x.height, x.width)
        } else {
            Tensor::from_vec(spec.in_channels, x.height, x.width, dcols)
        }
    }

    fn eval_node(&self, node: &Node, vals: &[Tensor]) -> Tensor {
        let arg = |i: usize| &vals[node.inputs[i]];
        match node.op {
            Op::Input => unreachable!("input is seeded by the caller"),
            Op::Conv { layer } => self.conv_forward(&self.convs[layer], arg(0)),
            Op::Relu => {
                let x = arg(0);
                x.with_data(x.data.iter().map(|v| v.max(0.0)).collect())
            }
            Op::Sigmoid => {
                let x = arg(0);
                x.with_data(x.data.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect())
            }
            Op::MaxPool => {
                let x = arg(0);
                let (h2, w2) = (x.height / 2, x.width / 2);
                let mut out = Tensor::zeros(x.channels, h2, w2);
                for c in 0..x.channels {
                    let src = x.channel(c);
                    for y in 0..h2 {
                        for xx in 0..w2 {
                            let i = 2 * y * x.width + 2 * xx;
                            let m = src[i].max(src[i + 1]).max(src[i + x.width]).max(src[i + x.width + 1]);
                            out.data[c * h2 * w2 + y * w2 + xx] = m;
                        }
                    }
                }
                out
            }
            Op::Upsample => {
                let x = arg(0);
                let (h2, w2) = (x.height * 2, x.width * 2);
                let mut out = Tensor::zeros(x.channels, h2, w2);
                for c in 0..x.channels {
                    let src = x.channel(c);
                    for y in 0..h2 {
                        for xx in 0..w2 {
                            out.data[c * h2 * w2 + y * w2 + xx] = src[(y / 2) * x.width + xx / 2];
                        }
                    }
                }
                out
            }
            Op::Concat => {
                let (a, b) = (arg(0), arg(1));
                let mut data = Vec::with_capacity(a.data.len() + b.data.len());
                data.extend_from_slice(&a.data);
                data.extend_from_slice(&b.data);
                Tensor::from_vec(a.channels + b.channels, a.height, a.width, data)
            }
        }
    }

    /// Every node's value, in node order. The last useful entry is the output.
    pub fn forward_trace(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(input)?;
        let mut vals: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        vals.push(input.clone());
        for node in &self.nodes[1..] {
            let v = self.eval_node(node, &vals);
            vals.push(v);
        }
        Ok(vals)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut vals = self.forward_trace(input)?;
        Ok(vals.swap_remove(self.output))
    }

    pub fn output_of<'a>(&self, trace: &'a [Tensor]) -> &'a Tensor {
        &trace[self.output]
    }

    /// Back-propagate `grad_output` through a trace from [`Self::forward_trace`].
    /// Parameter gradients are added into `param_grad`; the input gradient is returned.
    pub fn backward(&self, trace: &[Tensor], grad_output: Tensor, param_grad: &mut [f32]) -> Tensor {
        assert_eq!(param_grad.len(), self.params.len());
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[self.output] = Some(grad_output);
        for idx in (1..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let x = &trace[node.inputs[0]];
            let send = |i: usize, t: Tensor, grads: &mut Vec<Option<Tensor>>| match &mut grads[i] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match node.op {
                Op::Input => unreachable!(),
                Op::Conv { layer } => {
                    let dx = self.conv_backward(&self.convs[layer], x, &g, param_grad);
                    send(node.inputs[0], dx, &mut grads);
                }
                Op::Relu => {
                    let y = &trace[idx];
                    let data = g.data.iter().zip(&y.data).map(|(g, y)| if *y > 0.0 { *g } else { 0.0 }).collect();
                    send(node.inputs[0], g.with_data(data), &mut grads);
                }
                Op::Sigmoid => {
                    let y = &trace[idx];
                    let data = g.data.iter().zip(&y.data).map(|(g, y)| g * y * (1.0 - y)).collect();
                    send(node.inputs[0], g.with_data(data), &mut grads);
                }
                Op::MaxPool => {
                    let mut dx = Tensor::zeros(x.channels, x.height, x.width);
                    let (h2, w2) = (g.height, g.width);
                    for c in 0..x.channels {
                        let src = x.channel(c);
                        let base = c * x.plane();
                        for y in 0..h2 {
                            for xx in 0..w2 {
                                let i = 2 * y * x.width + 2 * xx;
                                let cand = [i, i + 1, i + x.width, i + x.width + 1];
                                let best = cand.into_iter().fold(i, |b, j| if src[j] > src[b] { j } else { b });
                                dx.data[base + best] += g.data[c * h2 * w2 + y * w2 + xx];
                            }
                        }
                    }
                    send(node.inputs[0], dx, &mut grads);
                }
                Op::Upsample => {
                    let mut dx = Tensor::zeros(x.channels, x.height, x.width);
                    for c in 0..g.channels {
                        let base = c * x.plane();
                        for y in 0..g.height {
                            for xx in 0..g.width {
                                dx.data[base + (y / 2) * x.width + xx / 2] += g.data[c * g.plane() + y * g.width + xx];
                            }
                        }
                    }
                    send(node.inputs[0], dx, &mut grads);
                }
                Op::Concat => {
                    let a = &trace[node.inputs[0]];
                    let split = a.data.len();
                    let (ga, gb) = g.data.split_at(split);
                    let b_ch = g.channels - a.channels;
                    send(node.inputs[0], Tensor::from_vec(a.channels, g.height, g.width, ga.to_vec()), &mut grads);
                    send(node.inputs[1], Tensor::from_vec(b_ch, g.height, g.width, gb.to_vec()), &mut grads);
                }
            }
        }
        grads[0].take().unwrap_or_else(|| Tensor::zeros(trace[0].channels, trace[0].height, trace[0].width))
    }
}

/// Adam with classic L2 regularization folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub weight_decay: f32,
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    pub fn new(param_count: usize, learning_rate: f32, weight_decay: f32) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let g = g + self.weight_decay * *p;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_tensor(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0f32..1.0)).collect())
    }

    /// Small graph touching every op, including a skip concat.
    fn toy_network() -> Network {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let e = b.conv_relu(x, 3);
        let p = b.max_pool(e);
        let m = b.conv(p, 4, 1);
        let m = b.relu(m);
        let u = b.upsample(m);
        let cat = b.concat(u, e);
        let o = b.conv(cat, 2, 3);
        let o = b.sigmoid(o);
        b.finish(o, 3)
    }

    fn objective(net: &Network, x: &Tensor, weights: &Tensor) -> f64 {
        let y = net.forward(x).unwrap();
        y.data.iter().zip(&weights.data).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = toy_network();
        let x = random_tensor(2, 4, 6, 1);
        let w = random_tensor(2, 4, 6, 2);
        let trace = net.forward_trace(&x).unwrap();
        let mut pg = vec![0.0; net.param_count()];
        let dx = net.backward(&trace, w.clone(), &mut pg);

        // Central differences at two step sizes; coordinates where they
        // disagree straddle a ReLU or max-pool kink and are skipped.
        let central = |f: &dyn Fn(f32) -> f64, h: f32| (f(h) - f(-h)) / (2.0 * h as f64);
        let mut checked = 0;
        let mut total = 0;
        for i in (0..x.data.len()).step_by(5) {
            let f = |d: f32| {
                let mut xd = x.clone();
                xd.data[i] += d;
                objective(&net, &xd, &w)
            };
            let (a, b) = (central(&f, 1e-2), central(&f, 5e-3));
            total += 1;
            if (a - b).abs() > 1e-3 * a.abs().max(0.05) {
                continue;
            }
            checked += 1;
            assert!((b - dx.data[i] as f64).abs() < 1e-2 * b.abs().max(0.05), "input {i}: fd {b} vs {}", dx.data[i]);
        }
        for i in (0..net.param_count()).step_by(7) {
            let orig = net.params[i];
            let f = |d: f32| {
                let mut n = net.clone();
                n.params[i] = orig + d;
                objective(&n, &x, &w)
            };
            let (a, b) = (central(&f, 1e-2), central(&f, 5e-3));
            total += 1;
            if (a - b).abs() > 1e-3 * a.abs().max(0.05) {
                continue;
            }
            checked += 1;
            assert!((b - pg[i] as f64).abs() < 1e-2 * b.abs().max(0.05), "param {i}: fd {b} vs {}", pg[i]);
        }
        assert!(checked * 10 >= total * 8, "only {checked} of {total} coordinates were smooth");
    }

    #[test]
    fn shape_checks() {
        let net = toy_network();
        assert_eq!(net.size_divisor(), 2);
        assert!(net.forward(&random_tensor(2, 3, 4, 0)).is_err());
        assert!(net.forward(&random_tensor(1, 4, 4, 0)).is_err());
        let y = net.forward(&random_tensor(2, 4, 8, 0)).unwrap();
        assert_eq!((y.channels, y.height, y.width), (2, 4, 8));
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        let x = random_tensor(2, 5, 4, 7);
        let cols = im2col(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r: Vec<f32> = (0..cols.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs: f64 = cols.iter().zip(&r).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        let back = col2im(&r, 2, 5, 4);
        let rhs: f64 = x.data.iter().zip(&back.data).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        assert!((lhs - rhs).abs() < 1e-4);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut p = vec![3.0f32, -2.0];
        let mut opt = Adam::new(2, 0.1, 0.0);
        for _ in 0..300 {
            let g: Vec<f32> = p.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|v| v.abs() < 0.05), "{p:?}");
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(toy_network().params, toy_network().params);
    }
}
