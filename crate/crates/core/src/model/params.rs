use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::signal::DEFAULT_SAMPLE_RATE;

/// Architecture hyperparameters of the encoder / separator / decoder stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of sources.
    pub k: usize,
    /// Encoder filters (latent channels).
    pub n_filters: usize,
    /// Encoder/decoder kernel length in samples.
    pub kernel_len: usize,
    /// Encoder hop in samples.
    pub stride: usize,
    pub bottleneck: usize,
    pub hidden: usize,
    /// Depthwise kernel size inside each block; odd.
    pub block_kernel: usize,
    pub blocks: usize,
    pub repeats: usize,
    pub sample_rate: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            k: 2,
            n_filters: 64,
            kernel_len: 16,
            stride: 8,
            bottleneck: 32,
            hidden: 64,
            block_kernel: 3,
            blocks: 4,
            repeats: 2,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl ModelConfig {
    pub fn with_k(k: usize) -> Self {
        ModelConfig {
            k,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.k,
            self.n_filters,
            self.kernel_len,
            self.stride,
            self.bottleneck,
            self.hidden,
            self.block_kernel,
            self.blocks,
            self.repeats,
        ];
        if sizes.contains(&0) || self.sample_rate == 0 {
            return Err(Error::invalid("model sizes must all be positive"));
        }
        if self.k < 2 {
            return Err(Error::invalid(format!("model needs K >= 2 sources, got {}", self.k)));
        }
        if self.stride > self.kernel_len {
            return Err(Error::invalid(format!(
                "stride {} exceeds kernel length {}",
                self.stride, self.kernel_len
            )));
        }
        if self.block_kernel % 2 == 0 {
            return Err(Error::invalid("block kernel size must be odd"));
        }
        Ok(())
    }

    /// Padded length that makes the encoder frames tile the input exactly.
    pub fn padded_len(&self, len: usize) -> usize {
        if len <= self.kernel_len {
            return self.kernel_len;
        }
        let hops = (len - self.kernel_len).div_ceil(self.stride);
        self.kernel_len + hops * self.stride
    }

    pub fn frames(&self, len: usize) -> usize {
        (self.padded_len(len) - self.kernel_len) / self.stride + 1
    }
}

/// 1x1 convolution weight `[out, in, 1]` with bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointwise<T> {
    pub weight: T,
    pub bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormParams<T> {
    pub gain: T,
    pub bias: T,
}

/// One temporal block of the separator.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    pub expand: Pointwise<T>,
    pub prelu1: T,
    pub norm1: NormParams<T>,
    /// Depthwise kernel `[H, P]`.
    pub depthwise: T,
    pub depthwise_bias: T,
    pub prelu2: T,
    pub norm2: NormParams<T>,
    /// Absent on the final block, whose residual output would be unused.
    pub residual: Option<Pointwise<T>>,
    pub skip: Pointwise<T>,
}

/// Every learnable tensor of the network, generic over storage so the same
/// layout holds owned tensors or their graph bindings.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTree<T> {
    /// `[N, 1, L]`
    pub encoder: T,
    pub input_norm: NormParams<T>,
    pub bottleneck: Pointwise<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub mask_prelu: T,
    /// `[K*N, B, 1]`
    pub mask_head: Pointwise<T>,
    /// `[N, 1, L]`
    pub decoder: T,
}

impl<T> ParamTree<T> {
    /// Visits every leaf in the canonical order with its stable name.
    pub fn visit<'a>(&'a self, mut f: impl FnMut(&str, &'a T)) {
        self.walk(&mut f);
    }

    fn walk<'a>(&'a self, f: &mut dyn FnMut(&str, &'a T)) {
        f("encoder", &self.encoder);
        f("input_norm.gain", &self.input_norm.gain);
        f("input_norm.bias", &self.input_norm.bias);
        f("bottleneck.weight", &self.bottleneck.weight);
        f("bottleneck.bias", &self.bottleneck.bias);
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            f(&format!("{p}.expand.weight"), &b.expand.weight);
            f(&format!("{p}.expand.bias"), &b.expand.bias);
            f(&format!("{p}.prelu1"), &b.prelu1);
            f(&format!("{p}.norm1.gain"), &b.norm1.gain);
            f(&format!("{p}.norm1.bias"), &b.norm1.bias);
            f(&format!("{p}.depthwise.weight"), &b.depthwise);
            f(&format!("{p}.depthwise.bias"), &b.depthwise_bias);
            f(&format!("{p}.prelu2"), &b.prelu2);
            f(&format!("{p}.norm2.gain"), &b.norm2.gain);
            f(&format!("{p}.norm2.bias"), &b.norm2.bias);
            if let Some(r) = &b.residual {
                f(&format!("{p}.residual.weight"), &r.weight);
                f(&format!("{p}.residual.bias"), &r.bias);
            }
            f(&format!("{p}.skip.weight"), &b.skip.weight);
            f(&format!("{p}.skip.bias"), &b.skip.bias);
        }
        f("mask_prelu", &self.mask_prelu);
        f("mask_head.weight", &self.mask_head.weight);
        f("mask_head.bias", &self.mask_head.bias);
        f("decoder", &self.decoder);
    }

    /// Builds a tree of the same layout by mapping every leaf in canonical order.
    pub fn try_map<U>(&self, mut f: impl FnMut(&str, &T) -> Result<U>) -> Result<ParamTree<U>> {
        let pw = |f: &mut dyn FnMut(&str, &T) -> Result<U>, name: &str, p: &Pointwise<T>| -> Result<Pointwise<U>> {
            Ok(Pointwise {
                weight: f(&format!("{name}.weight"), &p.weight)?,
                bias: f(&format!("{name}.bias"), &p.bias)?,
            })
        };
        let norm = |f: &mut dyn FnMut(&str, &T) -> Result<U>, name: &str, p: &NormParams<T>| -> Result<NormParams<U>> {
            Ok(NormParams {
                gain: f(&format!("{name}.gain"), &p.gain)?,
                bias: f(&format!("{name}.bias"), &p.bias)?,
            })
        };
        let encoder = f("encoder", &self.encoder)?;
        let input_norm = norm(&mut f, "input_norm", &self.input_norm)?;
        let bottleneck = pw(&mut f, "bottleneck", &self.bottleneck)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            let expand = pw(&mut f, &format!("{p}.expand"), &b.expand)?;
            let prelu1 = f(&format!("{p}.prelu1"), &b.prelu1)?;
            let norm1 = norm(&mut f, &format!("{p}.norm1"), &b.norm1)?;
            let depthwise = f(&format!("{p}.depthwise.weight"), &b.depthwise)?;
            let depthwise_bias = f(&format!("{p}.depthwise.bias"), &b.depthwise_bias)?;
            let prelu2 = f(&format!("{p}.prelu2"), &b.prelu2)?;
            let norm2 = norm(&mut f, &format!("{p}.norm2"), &b.norm2)?;
            let residual = match &b.residual {
                Some(r) => Some(pw(&mut f, &format!("{p}.residual"), r)?),
                None => None,
            };
            let skip = pw(&mut f, &format!("{p}.skip"), &b.skip)?;
            blocks.push(BlockParams {
                expand,
                prelu1,
                norm1,
                depthwise,
                depthwise_bias,
                prelu2,
                norm2,
                residual,
                skip,
            });
        }
        let mask_prelu = f("mask_prelu", &self.mask_prelu)?;
        let mask_head = pw(&mut f, "mask_head", &self.mask_head)?;
        let decoder = f("decoder", &self.decoder)?;
        Ok(ParamTree {
            encoder,
            input_norm,
            bottleneck,
            blocks,
            mask_prelu,
            mask_head,
            decoder,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ParamTree<U> {
        self.try_map(|n, t| Ok(f(n, t))).expect("infallible map")
    }

    /// Leaves in canonical order.
    pub fn leaves(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.visit(|_, t| out.push(t));
        out
    }

    pub fn leaves_mut(&mut self) -> Vec<&mut T> {
        let mut out: Vec<&mut T> = Vec::new();
        out.push(&mut self.encoder);
        out.push(&mut self.input_norm.gain);
        out.push(&mut self.input_norm.bias);
        out.push(&mut self.bottleneck.weight);
        out.push(&mut self.bottleneck.bias);
        for b in &mut self.blocks {
            out.push(&mut b.expand.weight);
            out.push(&mut b.expand.bias);
            out.push(&mut b.prelu1);
            out.push(&mut b.norm1.gain);
            out.push(&mut b.norm1.bias);
            out.push(&mut b.depthwise);
            out.push(&mut b.depthwise_bias);
            out.push(&mut b.prelu2);
            out.push(&mut b.norm2.gain);
            out.push(&mut b.norm2.bias);
            if let Some(r) = &mut b.residual {
                out.push(&mut r.weight);
                out.push(&mut r.bias);
            }
            out.push(&mut b.skip.weight);
            out.push(&mut b.skip.bias);
        }
        out.push(&mut self.mask_prelu);
        out.push(&mut self.mask_head.weight);
        out.push(&mut self.mask_head.bias);
        out.push(&mut self.decoder);
        out
    }
}

/// The complete learnable state of a network together with its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: ParamTree<Tensor>,
}

/// Graph handles for one bound copy of the parameters.
pub type BoundParams = ParamTree<NodeId>;

const PRELU_INIT: f64 = 0.25;

#[derive(Clone, Copy)]
enum Init {
    /// Uniform on `[-sqrt(3 / fan_in), sqrt(3 / fan_in)]`.
    Uniform { fan_in: usize },
    Const(f64),
}

fn layout(cfg: &ModelConfig) -> ParamTree<(Vec<usize>, Init)> {
    let (k, n, l, b, h, p) = (
        cfg.k,
        cfg.n_filters,
        cfg.kernel_len,
        cfg.bottleneck,
        cfg.hidden,
        cfg.block_kernel,
    );
    let pw = |out: usize, inp: usize| Pointwise {
        weight: (vec![out, inp, 1], Init::Uniform { fan_in: inp }),
        bias: (vec![out], Init::Const(0.0)),
    };
    let norm = |c: usize| NormParams {
        gain: (vec![c], Init::Const(1.0)),
        bias: (vec![c], Init::Const(0.0)),
    };
    let total = cfg.blocks * cfg.repeats;
    let blocks = (0..total)
        .map(|i| BlockParams {
            expand: pw(h, b),
            prelu1: (vec![1], Init::Const(PRELU_INIT)),
            norm1: norm(h),
            depthwise: (vec![h, p], Init::Uniform { fan_in: p }),
            depthwise_bias: (vec![h], Init::Const(0.0)),
            prelu2: (vec![1], Init::Const(PRELU_INIT)),
            norm2: norm(h),
            residual: (i + 1 < total).then(|| pw(b, h)),
            skip: pw(b, h),
        })
        .collect();
    ParamTree {
        encoder: (vec![n, 1, l], Init::Uniform { fan_in: l }),
        input_norm: norm(n),
        bottleneck: pw(b, n),
        blocks,
        mask_prelu: (vec![1], Init::Const(PRELU_INIT)),
        mask_head: pw(k * n, b),
        decoder: (vec![n, 1, l], Init::Uniform { fan_in: n }),
    }
}

/// Deterministic initialisation from a seed.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = layout(cfg).map(|_, (shape, init)| {
        let numel: usize = shape.iter().product();
        let data = match *init {
            Init::Uniform { fan_in } => {
                let bound = (3.0 / fan_in as f64).sqrt();
                (0..numel).map(|_| rng.random_range(-bound..=bound)).collect()
            }
            Init::Const(v) => vec![v; numel],
        };
        Tensor::new(shape.clone(), data).expect("layout shape")
    });
    Ok(ModelParams {
        config: cfg.clone(),
        tensors,
    })
}

impl ModelParams {
    /// Fan-in used for every uniformly initialised tensor, by name.
    pub fn uniform_fan_ins(cfg: &ModelConfig) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        layout(cfg).visit(|name, (_, init)| {
            if let Init::Uniform { fan_in } = init {
                out.push((name.to_string(), *fan_in));
            }
        });
        out
    }

    /// Rebuilds parameters from `(name, tensor)` pairs, checking names and shapes.
    pub fn from_named(config: ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let mut it = named.into_iter();
        let tensors = layout(&config).try_map(|name, (shape, _)| {
            let (n, t) = it
                .next()
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            if n != name {
                return Err(Error::Format(format!("expected tensor {name}, found {n}")));
            }
            if t.shape() != shape.as_slice() {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(t)
        })?;
        if let Some((n, _)) = it.next() {
            return Err(Error::Format(format!("unexpected extra tensor {n}")));
        }
        Ok(ModelParams { config, tensors })
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.tensors.visit(|n, t| out.push((n.to_string(), t)));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.leaves().iter().map(|t| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.leaves().iter().all(|t| t.is_finite())
    }

    /// Registers every tensor in `graph`, as trainable leaves or constants.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> BoundParams {
        self.tensors.map(|_, t| {
            if trainable {
                graph.param(t.clone())
            } else {
                graph.constant(t.clone())
            }
        })
    }
}
