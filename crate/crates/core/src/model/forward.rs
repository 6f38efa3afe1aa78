use serde::{Deserialize, Serialize};

use super::params::{BlockParams, BoundParams, ModelParams, NormParams, Pointwise};
use crate::diff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::signal::{weighted_sum, GainVector, Waveform};

/// How remix gains enter the network at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Separation only; remixes scale the source estimates.
    Baseline,
    /// Trained with the remix loss; inference as baseline.
    Model1,
    /// Gains scale the masked latents before decoding.
    Model2,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Model1 => "model1",
            Variant::Model2 => "model2",
        }
    }

    pub fn uses_latent_gains(self) -> bool {
        self == Variant::Model2
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "model1" => Ok(Variant::Model1),
            "model2" => Ok(Variant::Model2),
            other => Err(Error::invalid(format!(
                "unknown variant {other:?} (expected baseline, model1 or model2)"
            ))),
        }
    }
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardNodes {
    /// Encoder output `[N, F]`.
    pub latent: NodeId,
    /// Masks `[K, N, F]`.
    pub masks: NodeId,
    /// Per-source estimates, each `[1, T]` at the input length.
    pub estimates: Vec<NodeId>,
}

/// Result of running the network on one mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationOutput {
    pub estimates: Vec<Waveform>,
    /// `[K, N, frames]`
    pub masks: Tensor,
    /// `[N, frames]`
    pub latent: Tensor,
}

fn pointwise(g: &mut Graph, x: NodeId, p: &Pointwise<NodeId>) -> Result<NodeId> {
    let y = g.conv1d(x, p.weight, 1)?;
    g.channel_bias(y, p.bias)
}

fn norm(g: &mut Graph, x: NodeId, p: &NormParams<NodeId>) -> Result<NodeId> {
    g.global_layer_norm(x, p.gain, p.bias)
}

/// One temporal block: returns `(residual, skip)` outputs.
pub fn separable_block(
    g: &mut Graph,
    x: NodeId,
    p: &BlockParams<NodeId>,
    dilation: usize,
) -> Result<(Option<NodeId>, NodeId)> {
    let y = pointwise(g, x, &p.expand)?;
    let y = g.prelu(y, p.prelu1)?;
    let y = norm(g, y, &p.norm1)?;
    let y = g.depthwise_conv1d(y, p.depthwise, dilation)?;
    let y = g.channel_bias(y, p.depthwise_bias)?;
    let y = g.prelu(y, p.prelu2)?;
    let y = norm(g, y, &p.norm2)?;
    let residual = match &p.residual {
        Some(r) => Some(pointwise(g, y, r)?),
        None => None,
    };
    let skip = pointwise(g, y, &p.skip)?;
    Ok((residual, skip))
}

/// Applies a block and its residual connection, returning `(output, skip)`.
pub fn depthwise_separable_block(
    g: &mut Graph,
    x: NodeId,
    p: &BlockParams<NodeId>,
    dilation: usize,
) -> Result<(NodeId, NodeId)> {
    let (res, skip) = separable_block(g, x, p, dilation)?;
    let out = match res {
        Some(r) => g.add(x, r)?,
        None => x,
    };
    Ok((out, skip))
}

/// Encoder and mask estimator: returns `(latent [N, F], masks [K, N, F])`.
pub fn encode(g: &mut Graph, params: &ModelParams, bound: &BoundParams, x: &[f64]) -> Result<(NodeId, NodeId)> {
    let cfg = &params.config;
    if x.len() < cfg.kernel_len {
        return Err(Error::invalid(format!(
            "input of {} samples is shorter than the encoder kernel ({})",
            x.len(),
            cfg.kernel_len
        )));
    }
    let mut padded = x.to_vec();
    padded.resize(cfg.padded_len(x.len()), 0.0);
    let input = g.constant(Tensor::row(padded));
    let latent = g.conv1d(input, bound.encoder, cfg.stride)?;
    let latent = g.relu(latent);

    let y = norm(g, latent, &bound.input_norm)?;
    let mut y = pointwise(g, y, &bound.bottleneck)?;
    let mut skips = Vec::with_capacity(bound.blocks.len());
    for (i, block) in bound.blocks.iter().enumerate() {
        let dilation = 1usize << (i % cfg.blocks);
        let (out, skip) = depthwise_separable_block(g, y, block, dilation)?;
        y = out;
        skips.push(skip);
    }
    let ones = vec![1.0; skips.len()];
    let skip_sum = g.weighted_sum(&skips, &ones)?;
    let z = g.prelu(skip_sum, bound.mask_prelu)?;
    let logits = pointwise(g, z, &bound.mask_head)?;
    let frames = g.value(logits).shape()[1];
    let logits = g.reshape(logits, vec![cfg.k, cfg.n_filters, frames])?;
    let masks = g.softmax_over_sources(logits)?;
    Ok((latent, masks))
}

/// Decodes `gain_k * (m_k ⊙ h)` for every source; `gains = None` skips the scaling.
pub fn decode(
    g: &mut Graph,
    params: &ModelParams,
    bound_decoder: NodeId,
    latent: NodeId,
    masks: NodeId,
    gains: Option<&GainVector>,
    len: usize,
) -> Result<Vec<NodeId>> {
    let cfg = &params.config;
    if let Some(gv) = gains {
        if gv.k() != cfg.k {
            return Err(Error::invalid(format!("{} gains for a {}-source model", gv.k(), cfg.k)));
        }
    }
    let mut estimates = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        let m = g.select(masks, k)?;
        let mut hk = g.hadamard(m, latent)?;
        if let Some(gv) = gains {
            hk = g.scale(hk, gv.linear()[k]);
        }
        let s = g.conv1d_transpose(hk, bound_decoder, cfg.stride)?;
        estimates.push(g.crop(s, len)?);
    }
    Ok(estimates)
}

/// Full forward pass inside an existing graph.
pub fn build_forward(
    g: &mut Graph,
    params: &ModelParams,
    bound: &BoundParams,
    x: &[f64],
    latent_gains: Option<&GainVector>,
) -> Result<ForwardNodes> {
    let (latent, masks) = encode(g, params, bound, x)?;
    let estimates = decode(g, params, bound.decoder, latent, masks, latent_gains, x.len())?;
    Ok(ForwardNodes {
        latent,
        masks,
        estimates,
    })
}

fn collect(g: &Graph, nodes: &ForwardNodes, sample_rate: u32) -> SeparationOutput {
    SeparationOutput {
        estimates: nodes
            .estimates
            .iter()
            .map(|&id| Waveform::new(g.value(id).data().to_vec(), sample_rate))
            .collect(),
        masks: g.value(nodes.masks).clone(),
        latent: g.value(nodes.latent).clone(),
    }
}

fn run(params: &ModelParams, x: &Waveform, gains: Option<&GainVector>) -> Result<SeparationOutput> {
    if x.sample_rate != params.config.sample_rate {
        return Err(Error::invalid(format!(
            "input sampled at {} Hz, model expects {} Hz",
            x.sample_rate, params.config.sample_rate
        )));
    }
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let nodes = build_forward(&mut g, params, &bound, &x.samples, gains)?;
    Ok(collect(&g, &nodes, x.sample_rate))
}

/// Separates `x` into `K` source estimates.
pub fn forward_separate(params: &ModelParams, x: &Waveform) -> Result<SeparationOutput> {
    run(params, x, None)
}

/// Separates `x` while scaling each masked latent by its gain before decoding.
pub fn forward_remix_latent(params: &ModelParams, x: &Waveform, gains: &GainVector) -> Result<SeparationOutput> {
    run(params, x, Some(gains))
}

/// Re-runs only the decoder on a cached latent and masks.
pub fn decode_cached(params: &ModelParams, cached: &SeparationOutput, gains: Option<&GainVector>) -> Result<Vec<Waveform>> {
    let len = cached
        .estimates
        .first()
        .map(Waveform::len)
        .ok_or_else(|| Error::invalid("cached separation has no estimates"))?;
    let mut g = Graph::new();
    let decoder = g.constant(params.tensors.decoder.clone());
    let latent = g.constant(cached.latent.clone());
    let masks = g.constant(cached.masks.clone());
    let ids = decode(&mut g, params, decoder, latent, masks, gains, len)?;
    let rate = params.config.sample_rate;
    Ok(ids
        .into_iter()
        .map(|id| Waveform::new(g.value(id).data().to_vec(), rate))
        .collect())
}

/// `sum_k gamma_k * estimate_k`.
pub fn remix_from_estimates(out: &SeparationOutput, gains: &GainVector) -> Result<Waveform> {
    if gains.k() != out.estimates.len() {
        return Err(Error::invalid(format!(
            "{} gains for {} estimates",
            gains.k(),
            out.estimates.len()
        )));
    }
    Ok(weighted_sum(&out.estimates, gains.linear()))
}

/// Largest deviation of the per-position mask sum from one.
pub fn mask_partition_error(masks: &Tensor) -> f64 {
    let k = masks.shape()[0];
    let m = masks.numel() / k;
    let d = masks.data();
    (0..m)
        .map(|j| ((0..k).map(|s| d[s * m + j]).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}
