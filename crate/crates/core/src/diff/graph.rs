use super::gemm::{gemm, gemm_nt, gemm_tn};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::metrics::EPS_REL;

/// Variance floor of the global layer norm.
pub const LAYER_NORM_EPS: f64 = 1e-8;

const DB_PER_LN: f64 = 10.0 / std::f64::consts::LN_10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        // im2col buffer; empty for pointwise convolutions, which read the input directly
        cols: Vec<f64>,
    },
    ConvTranspose1d {
        input: NodeId,
        kernel: NodeId,
        stride: usize,
    },
    Depthwise {
        input: NodeId,
        kernel: NodeId,
        dilation: usize,
    },
    ChannelBias {
        input: NodeId,
        bias: NodeId,
    },
    Relu {
        input: NodeId,
    },
    Prelu {
        input: NodeId,
        slope: NodeId,
    },
    GlobalLayerNorm {
        input: NodeId,
        gain: NodeId,
        bias: NodeId,
        normalized: Vec<f64>,
        inv_std: f64,
    },
    Softmax {
        input: NodeId,
    },
    Select {
        input: NodeId,
        index: usize,
    },
    Hadamard {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        input: NodeId,
        c: f64,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    WeightedSum {
        inputs: Vec<NodeId>,
        weights: Vec<f64>,
    },
    Crop {
        input: NodeId,
        len: usize,
    },
    Reshape {
        input: NodeId,
    },
    Sum {
        input: NodeId,
    },
    NegSnr {
        estimate: NodeId,
        reference: Vec<f64>,
        denom: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A computation recorded in evaluation order, differentiated in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::is_finite)
    }
}

fn shape_err(what: &str, detail: String) -> Error {
    Error::invalid(format!("{what}: {detail}"))
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [c, n] => Ok((c, n)),
        ref s => Err(shape_err(what, format!("expected a 2-d tensor, got shape {s:?}"))),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data()[0]
    }

    /// True if every recorded forward value is finite.
    pub fn is_finite(&self) -> bool {
        self.nodes.iter().all(|n| n.value.is_finite())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Strided, unpadded 1-D convolution of `[C_in, T]` with `[C_out, C_in, L]`.
    pub fn conv1d(&mut self, input: NodeId, kernel: NodeId, stride: usize) -> Result<NodeId> {
        let (cin, t) = dims2(self.value(input), "conv1d input")?;
        let ks = self.value(kernel).shape().to_vec();
        let [cout, kcin, l] = ks[..] else {
            return Err(shape_err("conv1d kernel", format!("expected 3-d, got {ks:?}")));
        };
        if kcin != cin {
            return Err(shape_err("conv1d", format!("kernel expects {kcin} input channels, input has {cin}")));
        }
        if stride == 0 || l == 0 || t < l {
            return Err(shape_err("conv1d", format!("length {t} too short for kernel {l} (stride {stride})")));
        }
        let tout = (t - l) / stride + 1;
        let x = self.value(input).data();
        let w = self.value(kernel).data();
        let mut out = vec![0.0; cout * tout];
        let cols = if l == 1 && stride == 1 {
            gemm(cout, cin, tout, w, x, 0.0, &mut out);
            Vec::new()
        } else {
            let mut cols = vec![0.0; cin * l * tout];
            for ci in 0..cin {
                for li in 0..l {
                    let row = &mut cols[(ci * l + li) * tout..(ci * l + li + 1) * tout];
                    let src = &x[ci * t..(ci + 1) * t];
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = src[j * stride + li];
                    }
                }
            }
            gemm(cout, cin * l, tout, w, &cols, 0.0, &mut out);
            cols
        };
        let rg = self.rg(&[input, kernel]);
        Ok(self.push(
            Tensor::new(vec![cout, tout], out)?,
            Op::Conv1d { input, kernel, stride, cols },
            rg,
        ))
    }

    /// Transposed convolution of `[C_in, T]` with `[C_in, C_out, L]`, output length `(T-1)*stride + L`.
    pub fn conv1d_transpose(&mut self, input: NodeId, kernel: NodeId, stride: usize) -> Result<NodeId> {
        let (cin, t) = dims2(self.value(input), "conv1d_transpose input")?;
        let ks = self.value(kernel).shape().to_vec();
        let [kcin, cout, l] = ks[..] else {
            return Err(shape_err("conv1d_transpose kernel", format!("expected 3-d, got {ks:?}")));
        };
        if kcin != cin {
            return Err(shape_err("conv1d_transpose", format!("kernel expects {kcin} input channels, input has {cin}")));
        }
        if stride == 0 || l == 0 || t == 0 {
            return Err(shape_err("conv1d_transpose", "stride, kernel and input must be nonzero".into()));
        }
        let tout = (t - 1) * stride + l;
        let mut cols = vec![0.0; cout * l * t];
        gemm_tn(cout * l, cin, t, self.value(kernel).data(), self.value(input).data(), 0.0, &mut cols);
        let mut out = vec![0.0; cout * tout];
        for co in 0..cout {
            let dst = &mut out[co * tout..(co + 1) * tout];
            for li in 0..l {
                let row = &cols[(co * l + li) * t..(co * l + li + 1) * t];
                for (j, v) in row.iter().enumerate() {
                    dst[j * stride + li] += v;
                }
            }
        }
        let rg = self.rg(&[input, kernel]);
        Ok(self.push(
            Tensor::new(vec![cout, tout], out)?,
            Op::ConvTranspose1d { input, kernel, stride },
            rg,
        ))
    }

    /// Per-channel dilated convolution with `[C, P]` kernels and symmetric zero
    /// padding, so the time length is preserved. `P` must be odd.
    pub fn depthwise_conv1d(&mut self, input: NodeId, kernel: NodeId, dilation: usize) -> Result<NodeId> {
        let (c, t) = dims2(self.value(input), "depthwise input")?;
        let (kc, p) = dims2(self.value(kernel), "depthwise kernel")?;
        if kc != c || p % 2 == 0 || dilation == 0 {
            return Err(shape_err(
                "depthwise",
                format!("kernel {kc}x{p} (dilation {dilation}) incompatible with {c} channels; P must be odd"),
            ));
        }
        let pad = dilation * (p - 1) / 2;
        let x = self.value(input).data();
        let w = self.value(kernel).data();
        let mut out = vec![0.0; c * t];
        for ch in 0..c {
            let src = &x[ch * t..(ch + 1) * t];
            let dst = &mut out[ch * t..(ch + 1) * t];
            for j in 0..p {
                let wj = w[ch * p + j];
                let shift = j * dilation;
                // dst[i] += wj * src[i + shift - pad]
                let lo = pad.saturating_sub(shift);
                let hi = (t + pad).saturating_sub(shift).min(t);
                for i in lo..hi {
                    dst[i] += wj * src[i + shift - pad];
                }
            }
        }
        let rg = self.rg(&[input, kernel]);
        Ok(self.push(Tensor::new(vec![c, t], out)?, Op::Depthwise { input, kernel, dilation }, rg))
    }

    /// Adds a per-channel bias `[C]` to `[C, T]`.
    pub fn channel_bias(&mut self, input: NodeId, bias: NodeId) -> Result<NodeId> {
        let (c, t) = dims2(self.value(input), "channel_bias input")?;
        let b = self.value(bias);
        if b.numel() != c {
            return Err(shape_err("channel_bias", format!("{} biases for {c} channels", b.numel())));
        }
        let mut out = self.value(input).data().to_vec();
        for (ch, &bv) in b.data().iter().enumerate() {
            for v in &mut out[ch * t..(ch + 1) * t] {
                *v += bv;
            }
        }
        let shape = self.value(input).shape().to_vec();
        let rg = self.rg(&[input, bias]);
        Ok(self.push(Tensor::new(shape, out)?, Op::ChannelBias { input, bias }, rg))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let v = self.value(input);
        let out: Vec<f64> = v.data().iter().map(|&x| x.max(0.0)).collect();
        let t = Tensor::new(v.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(&[input]);
        self.push(t, Op::Relu { input }, rg)
    }

    /// Parametric ReLU with a single shared slope.
    pub fn prelu(&mut self, input: NodeId, slope: NodeId) -> Result<NodeId> {
        if self.value(slope).numel() != 1 {
            return Err(shape_err("prelu", "slope must be a single value".into()));
        }
        let a = self.value(slope).data()[0];
        let v = self.value(input);
        let out: Vec<f64> = v.data().iter().map(|&x| if x > 0.0 { x } else { a * x }).collect();
        let t = Tensor::new(v.shape().to_vec(), out)?;
        let rg = self.rg(&[input, slope]);
        Ok(self.push(t, Op::Prelu { input, slope }, rg))
    }

    /// Normalises `[C, T]` over all entries, then applies per-channel gain and bias.
    pub fn global_layer_norm(&mut self, input: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (c, t) = dims2(self.value(input), "global_layer_norm input")?;
        if self.value(gain).numel() != c || self.value(bias).numel() != c {
            return Err(shape_err("global_layer_norm", format!("gain/bias must have {c} entries")));
        }
        let x = self.value(input).data();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let normalized: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut out = vec![0.0; c * t];
        for ch in 0..c {
            for i in ch * t..(ch + 1) * t {
                out[i] = g[ch] * normalized[i] + b[ch];
            }
        }
        let rg = self.rg(&[input, gain, bias]);
        Ok(self.push(
            Tensor::new(vec![c, t], out)?,
            Op::GlobalLayerNorm { input, gain, bias, normalized, inv_std },
            rg,
        ))
    }

    /// Softmax across the leading (source) axis of a `[K, ...]` tensor.
    pub fn softmax_over_sources(&mut self, input: NodeId) -> Result<NodeId> {
        let v = self.value(input);
        let k = *v.shape().first().ok_or_else(|| shape_err("softmax", "empty shape".into()))?;
        if k == 0 || v.numel() == 0 {
            return Err(shape_err("softmax", "empty tensor".into()));
        }
        let m = v.numel() / k;
        let x = v.data();
        let mut out = vec![0.0; x.len()];
        for j in 0..m {
            let mut mx = f64::NEG_INFINITY;
            for s in 0..k {
                mx = mx.max(x[s * m + j]);
            }
            let mut z = 0.0;
            for s in 0..k {
                let e = (x[s * m + j] - mx).exp();
                out[s * m + j] = e;
                z += e;
            }
            for s in 0..k {
                out[s * m + j] /= z;
            }
        }
        let t = Tensor::new(v.shape().to_vec(), out)?;
        let rg = self.rg(&[input]);
        Ok(self.push(t, Op::Softmax { input }, rg))
    }

    /// Entry `index` along the leading axis.
    pub fn select(&mut self, input: NodeId, index: usize) -> Result<NodeId> {
        let v = self.value(input);
        let shape = v.shape();
        if shape.len() < 2 || index >= shape[0] {
            return Err(shape_err("select", format!("index {index} into shape {shape:?}")));
        }
        let rest = shape[1..].to_vec();
        let m: usize = rest.iter().product();
        let out = v.data()[index * m..(index + 1) * m].to_vec();
        let rg = self.rg(&[input]);
        Ok(self.push(Tensor::new(rest, out)?, Op::Select { input, index }, rg))
    }

    /// Elementwise product.
    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("hadamard", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let out = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(va.shape().to_vec(), out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Hadamard { a, b }, rg))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, input: NodeId, c: f64) -> NodeId {
        let v = self.value(input);
        let out = v.data().iter().map(|x| x * c).collect();
        let t = Tensor::new(v.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(&[input]);
        self.push(t, Op::Scale { input, c }, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let out = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(va.shape().to_vec(), out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add { a, b }, rg))
    }

    /// `sum_i weights[i] * inputs[i]`; unit weights contribute exactly.
    pub fn weighted_sum(&mut self, inputs: &[NodeId], weights: &[f64]) -> Result<NodeId> {
        if inputs.is_empty() || inputs.len() != weights.len() {
            return Err(shape_err(
                "weighted_sum",
                format!("{} inputs, {} weights", inputs.len(), weights.len()),
            ));
        }
        let shape = self.value(inputs[0]).shape().to_vec();
        let mut out = vec![0.0; self.value(inputs[0]).numel()];
        for (&id, &w) in inputs.iter().zip(weights) {
            let v = self.value(id);
            if v.shape() != shape.as_slice() {
                return Err(shape_err("weighted_sum", format!("{:?} vs {shape:?}", v.shape())));
            }
            if w == 1.0 {
                for (o, x) in out.iter_mut().zip(v.data()) {
                    *o += x;
                }
            } else {
                for (o, x) in out.iter_mut().zip(v.data()) {
                    *o += w * x;
                }
            }
        }
        let rg = self.rg(inputs);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::WeightedSum { inputs: inputs.to_vec(), weights: weights.to_vec() },
            rg,
        ))
    }

    /// Keeps the first `len` samples of every channel of `[C, T]`.
    pub fn crop(&mut self, input: NodeId, len: usize) -> Result<NodeId> {
        let (c, t) = dims2(self.value(input), "crop input")?;
        if len > t {
            return Err(shape_err("crop", format!("cannot crop length {t} to {len}")));
        }
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(c * len);
        for ch in 0..c {
            out.extend_from_slice(&x[ch * t..ch * t + len]);
        }
        let rg = self.rg(&[input]);
        Ok(self.push(Tensor::new(vec![c, len], out)?, Op::Crop { input, len }, rg))
    }

    /// Same values under a new shape with the same element count.
    pub fn reshape(&mut self, input: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let v = self.value(input);
        let t = Tensor::new(shape, v.data().to_vec())
            .map_err(|e| shape_err("reshape", e.to_string()))?;
        let rg = self.rg(&[input]);
        Ok(self.push(t, Op::Reshape { input }, rg))
    }

    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let s = self.value(input).data().iter().sum();
        let rg = self.rg(&[input]);
        self.push(Tensor::scalar(s), Op::Sum { input }, rg)
    }

    /// `-10 log10(||s||^2 / (||est - s||^2 + eps ||s||^2))` against a constant reference.
    pub fn neg_snr_loss(&mut self, reference: &[f64], estimate: NodeId) -> Result<NodeId> {
        let est = self.value(estimate).data();
        if est.len() != reference.len() {
            return Err(shape_err(
                "neg_snr_loss",
                format!("reference has {} samples, estimate {}", reference.len(), est.len()),
            ));
        }
        let es: f64 = reference.iter().map(|x| x * x).sum();
        if es == 0.0 {
            return Err(Error::Domain("reference signal is all zeros".into()));
        }
        let err: f64 = est.iter().zip(reference).map(|(e, s)| (e - s) * (e - s)).sum();
        let denom = err + EPS_REL * es;
        let loss = -10.0 * (es / denom).log10();
        let rg = self.rg(&[estimate]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::NegSnr { estimate, reference: reference.to_vec(), denom },
            rg,
        ))
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        if self.value(root).numel() != 1 {
            return Err(Error::invalid(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(Tensor::full(self.value(root).shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else { continue };
            self.propagate(node, &upstream, &mut grads);
            grads[idx] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, node: &Node, up: &Tensor, grads: &mut [Option<Tensor>]) {
        let dy = up.data();
        let mut acc = |id: NodeId, g: &[f64]| {
            let slot = &mut grads[id.0];
            match slot {
                Some(t) => t.add_assign(g),
                None => {
                    *slot = Some(Tensor::new(self.value(id).shape().to_vec(), g.to_vec()).expect("grad shape"))
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d { input, kernel, stride, cols } => {
                let (cin, t) = dims2(self.value(*input), "").unwrap();
                let ks = self.value(*kernel).shape();
                let (cout, l) = (ks[0], ks[2]);
                let tout = node.value.shape()[1];
                let pointwise = cols.is_empty();
                if self.wants(*kernel) {
                    let mut dw = vec![0.0; cout * cin * l];
                    let b = if pointwise { self.value(*input).data() } else { cols.as_slice() };
                    gemm_nt(cout, tout, cin * l, dy, b, 0.0, &mut dw);
                    acc(*kernel, &dw);
                }
                if self.wants(*input) {
                    let w = self.value(*kernel).data();
                    if pointwise {
                        let mut dx = vec![0.0; cin * t];
                        gemm_tn(cin, cout, t, w, dy, 0.0, &mut dx);
                        acc(*input, &dx);
                    } else {
                        let mut dcols = vec![0.0; cin * l * tout];
                        gemm_tn(cin * l, cout, tout, w, dy, 0.0, &mut dcols);
                        let mut dx = vec![0.0; cin * t];
                        for ci in 0..cin {
                            for li in 0..l {
                                let row = &dcols[(ci * l + li) * tout..(ci * l + li + 1) * tout];
                                let dst = &mut dx[ci * t..(ci + 1) * t];
                                for (j, v) in row.iter().enumerate() {
                                    dst[j * stride + li] += v;
                                }
                            }
                        }
                        acc(*input, &dx);
                    }
                }
            }
            Op::ConvTranspose1d { input, kernel, stride } => {
                let (cin, t) = dims2(self.value(*input), "").unwrap();
                let ks = self.value(*kernel).shape();
                let (cout, l) = (ks[1], ks[2]);
                let tout = node.value.shape()[1];
                let mut dcols = vec![0.0; cout * l * t];
                for co in 0..cout {
                    let src = &dy[co * tout..(co + 1) * tout];
                    for li in 0..l {
                        let row = &mut dcols[(co * l + li) * t..(co * l + li + 1) * t];
                        for (j, r) in row.iter_mut().enumerate() {
                            *r = src[j * stride + li];
                        }
                    }
                }
                if self.wants(*input) {
                    let mut dx = vec![0.0; cin * t];
                    gemm(cin, cout * l, t, self.value(*kernel).data(), &dcols, 0.0, &mut dx);
                    acc(*input, &dx);
                }
                if self.wants(*kernel) {
                    let mut dw = vec![0.0; cin * cout * l];
                    gemm_nt(cin, t, cout * l, self.value(*input).data(), &dcols, 0.0, &mut dw);
                    acc(*kernel, &dw);
                }
            }
            Op::Depthwise { input, kernel, dilation } => {
                let (c, t) = dims2(self.value(*input), "").unwrap();
                let p = self.value(*kernel).shape()[1];
                let pad = dilation * (p - 1) / 2;
                let x = self.value(*input).data();
                let w = self.value(*kernel).data();
                let mut dx = vec![0.0; c * t];
                let mut dw = vec![0.0; c * p];
                for ch in 0..c {
                    let src = &x[ch * t..(ch + 1) * t];
                    let g = &dy[ch * t..(ch + 1) * t];
                    let dst = &mut dx[ch * t..(ch + 1) * t];
                    for j in 0..p {
                        let shift = j * dilation;
                        let lo = pad.saturating_sub(shift);
                        let hi = (t + pad).saturating_sub(shift).min(t);
                        let wj = w[ch * p + j];
                        let mut s = 0.0;
                        for i in lo..hi {
                            s += g[i] * src[i + shift - pad];
                            dst[i + shift - pad] += wj * g[i];
                        }
                        dw[ch * p + j] = s;
                    }
                }
                if self.wants(*input) {
                    acc(*input, &dx);
                }
                if self.wants(*kernel) {
                    acc(*kernel, &dw);
                }
            }
            Op::ChannelBias { input, bias } => {
                if self.wants(*input) {
                    acc(*input, dy);
                }
                if self.wants(*bias) {
                    let c = self.value(*bias).numel();
                    let t = dy.len() / c;
                    let db: Vec<f64> = (0..c).map(|ch| dy[ch * t..(ch + 1) * t].iter().sum()).collect();
                    acc(*bias, &db);
                }
            }
            Op::Relu { input } => {
                let x = self.value(*input).data();
                let dx: Vec<f64> = x.iter().zip(dy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
                acc(*input, &dx);
            }
            Op::Prelu { input, slope } => {
                let x = self.value(*input).data();
                let a = self.value(*slope).data()[0];
                if self.wants(*input) {
                    let dx: Vec<f64> = x.iter().zip(dy).map(|(&v, &g)| if v > 0.0 { g } else { a * g }).collect();
                    acc(*input, &dx);
                }
                if self.wants(*slope) {
                    let da: f64 = x.iter().zip(dy).filter(|(&v, _)| v <= 0.0).map(|(v, g)| v * g).sum();
                    acc(*slope, &[da]);
                }
            }
            Op::GlobalLayerNorm { input, gain, bias, normalized, inv_std } => {
                let c = self.value(*gain).numel();
                let t = dy.len() / c;
                let g = self.value(*gain).data();
                if self.wants(*gain) {
                    let dg: Vec<f64> = (0..c)
                        .map(|ch| (ch * t..(ch + 1) * t).map(|i| dy[i] * normalized[i]).sum())
                        .collect();
                    acc(*gain, &dg);
                }
                if self.wants(*bias) {
                    let db: Vec<f64> = (0..c).map(|ch| dy[ch * t..(ch + 1) * t].iter().sum()).collect();
                    acc(*bias, &db);
                }
                if self.wants(*input) {
                    let n = dy.len() as f64;
                    let dxhat: Vec<f64> = (0..dy.len()).map(|i| dy[i] * g[i / t]).collect();
                    let mean_d = dxhat.iter().sum::<f64>() / n;
                    let mean_dx = dxhat.iter().zip(normalized).map(|(a, b)| a * b).sum::<f64>() / n;
                    let dx: Vec<f64> = dxhat
                        .iter()
                        .zip(normalized)
                        .map(|(d, xh)| inv_std * (d - mean_d - xh * mean_dx))
                        .collect();
                    acc(*input, &dx);
                }
            }
            Op::Softmax { input } => {
                let y = node.value.data();
                let k = node.value.shape()[0];
                let m = y.len() / k;
                let mut dx = vec![0.0; y.len()];
                for j in 0..m {
                    let mut dot = 0.0;
                    for s in 0..k {
                        dot += y[s * m + j] * dy[s * m + j];
                    }
                    for s in 0..k {
                        dx[s * m + j] = y[s * m + j] * (dy[s * m + j] - dot);
                    }
                }
                acc(*input, &dx);
            }
            Op::Select { input, index } => {
                let v = self.value(*input);
                let m = dy.len();
                let mut dx = vec![0.0; v.numel()];
                dx[index * m..(index + 1) * m].copy_from_slice(dy);
                acc(*input, &dx);
            }
            Op::Hadamard { a, b } => {
                if self.wants(*a) {
                    let d: Vec<f64> = dy.iter().zip(self.value(*b).data()).map(|(g, y)| g * y).collect();
                    acc(*a, &d);
                }
                if self.wants(*b) {
                    let d: Vec<f64> = dy.iter().zip(self.value(*a).data()).map(|(g, x)| g * x).collect();
                    acc(*b, &d);
                }
            }
            Op::Scale { input, c } => {
                let d: Vec<f64> = dy.iter().map(|g| g * c).collect();
                acc(*input, &d);
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    acc(*a, dy);
                }
                if self.wants(*b) {
                    acc(*b, dy);
                }
            }
            Op::WeightedSum { inputs, weights } => {
                for (&id, &w) in inputs.iter().zip(weights) {
                    if self.wants(id) {
                        if w == 1.0 {
                            acc(id, dy);
                        } else {
                            let d: Vec<f64> = dy.iter().map(|g| g * w).collect();
                            acc(id, &d);
                        }
                    }
                }
            }
            Op::Crop { input, len } => {
                let (c, t) = dims2(self.value(*input), "").unwrap();
                let mut dx = vec![0.0; c * t];
                for ch in 0..c {
                    dx[ch * t..ch * t + len].copy_from_slice(&dy[ch * len..(ch + 1) * len]);
                }
                acc(*input, &dx);
            }
            Op::Reshape { input } => acc(*input, dy),
            Op::Sum { input } => {
                let d = vec![dy[0]; self.value(*input).numel()];
                acc(*input, &d);
            }
            Op::NegSnr { estimate, reference, denom } => {
                let est = self.value(*estimate).data();
                let k = dy[0] * DB_PER_LN * 2.0 / denom;
                let d: Vec<f64> = est.iter().zip(reference).map(|(e, s)| k * (e - s)).collect();
                acc(*estimate, &d);
            }
        }
    }
}
