use serde::{Deserialize, Serialize};

use crate::diff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::model::{build_forward, BoundParams, ModelParams, Variant};
use crate::signal::{mix, remix_target, GainVector, SourceSet};

/// Relative weights of the remix term (`psi`) and the per-source term (`lambda`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub psi: f64,
    pub lambda: f64,
}

impl LossWeights {
    pub const SOURCE_ONLY: LossWeights = LossWeights { psi: 0.0, lambda: 1.0 };

    pub fn new(psi: f64, lambda: f64) -> Result<Self> {
        let w = LossWeights { psi, lambda };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.psi >= 0.0 && self.lambda >= 0.0) || !self.psi.is_finite() || !self.lambda.is_finite() {
            return Err(Error::invalid(format!(
                "loss weights must be finite and non-negative (psi {}, lambda {})",
                self.psi, self.lambda
            )));
        }
        if self.psi == 0.0 && self.lambda == 0.0 {
            return Err(Error::invalid("psi and lambda cannot both be zero"));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { psi: 1.0, lambda: 1.0 }
    }
}

fn check_batch(params: &ModelParams, batch: &[SourceSet], gains: Option<&[GainVector]>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let k = params.config.k;
    if let Some(set) = batch.iter().find(|s| s.k() != k) {
        return Err(Error::invalid(format!("batch item has {} sources, model has {k}", set.k())));
    }
    if let Some(g) = gains {
        if g.len() != batch.len() {
            return Err(Error::invalid(format!("{} gain vectors for {} batch items", g.len(), batch.len())));
        }
        if let Some(gv) = g.iter().find(|gv| gv.k() != k) {
            return Err(Error::invalid(format!("gain vector of length {} for {k} sources", gv.k())));
        }
    }
    Ok(())
}

fn mean(g: &mut Graph, items: &[NodeId]) -> Result<NodeId> {
    let w = 1.0 / items.len() as f64;
    g.weighted_sum(items, &vec![w; items.len()])
}

fn sum(g: &mut Graph, terms: &[NodeId]) -> Result<NodeId> {
    g.weighted_sum(terms, &vec![1.0; terms.len()])
}

/// Batch mean of the summed per-source negative SNR.
pub fn loss_baseline(g: &mut Graph, params: &ModelParams, bound: &BoundParams, batch: &[SourceSet]) -> Result<NodeId> {
    check_batch(params, batch, None)?;
    let mut items = Vec::with_capacity(batch.len());
    for set in batch {
        let x = mix(set);
        let fwd = build_forward(g, params, bound, &x.samples, None)?;
        let mut terms = Vec::with_capacity(set.k());
        for (s, &est) in set.sources().iter().zip(&fwd.estimates) {
            terms.push(g.neg_snr_loss(&s.samples, est)?);
        }
        items.push(sum(g, &terms)?);
    }
    mean(g, &items)
}

fn weighted_item(
    g: &mut Graph,
    weights: LossWeights,
    remix: Option<NodeId>,
    sources: Vec<NodeId>,
) -> Result<NodeId> {
    let mut terms = Vec::new();
    let mut w = Vec::new();
    if let Some(r) = remix {
        terms.push(r);
        w.push(weights.psi);
    }
    if !sources.is_empty() {
        let s = sum(g, &sources)?;
        terms.push(s);
        w.push(weights.lambda);
    }
    g.weighted_sum(&terms, &w)
}

/// Remix-regularised loss: `psi * E(y || sum gamma_k s_hat_k) + lambda * sum_k E(s_k || s_hat_k)`.
///
/// Zero-weighted terms are left out of the graph entirely, so `psi = 0`
/// builds exactly the baseline computation.
pub fn loss_model1(
    g: &mut Graph,
    params: &ModelParams,
    bound: &BoundParams,
    batch: &[SourceSet],
    gains: &[GainVector],
    weights: LossWeights,
) -> Result<NodeId> {
    weights.validate()?;
    check_batch(params, batch, Some(gains))?;
    if weights.psi == 0.0 && weights.lambda == 1.0 {
        return loss_baseline(g, params, bound, batch);
    }
    let mut items = Vec::with_capacity(batch.len());
    for (set, gv) in batch.iter().zip(gains) {
        let x = mix(set);
        let fwd = build_forward(g, params, bound, &x.samples, None)?;
        let remix = if weights.psi > 0.0 {
            let y = remix_target(set, gv)?;
            let y_hat = g.weighted_sum(&fwd.estimates, gv.linear())?;
            Some(g.neg_snr_loss(&y.samples, y_hat)?)
        } else {
            None
        };
        let mut src = Vec::new();
        if weights.lambda > 0.0 {
            for (s, &est) in set.sources().iter().zip(&fwd.estimates) {
                src.push(g.neg_snr_loss(&s.samples, est)?);
            }
        }
        items.push(weighted_item(g, weights, remix, src)?);
    }
    mean(g, &items)
}

/// Latent-gain loss: estimates are decoded from gain-scaled masked latents and
/// compared with the scaled sources and with the remix target.
pub fn loss_model2(
    g: &mut Graph,
    params: &ModelParams,
    bound: &BoundParams,
    batch: &[SourceSet],
    gains: &[GainVector],
    weights: LossWeights,
) -> Result<NodeId> {
    weights.validate()?;
    check_batch(params, batch, Some(gains))?;
    let mut items = Vec::with_capacity(batch.len());
    for (set, gv) in batch.iter().zip(gains) {
        let x = mix(set);
        let fwd = build_forward(g, params, bound, &x.samples, Some(gv))?;
        let remix = if weights.psi > 0.0 {
            let y = remix_target(set, gv)?;
            let y_tilde = sum(g, &fwd.estimates)?;
            Some(g.neg_snr_loss(&y.samples, y_tilde)?)
        } else {
            None
        };
        let mut src = Vec::new();
        if weights.lambda > 0.0 {
            for ((s, &est), &gamma) in set.sources().iter().zip(&fwd.estimates).zip(gv.linear()) {
                let target: Vec<f64> = s.samples.iter().map(|v| gamma * v).collect();
                src.push(g.neg_snr_loss(&target, est)?);
            }
        }
        items.push(weighted_item(g, weights, remix, src)?);
    }
    mean(g, &items)
}

/// Dispatches to the loss of `variant`; the baseline ignores gains and weights.
pub fn variant_loss(
    g: &mut Graph,
    variant: Variant,
    params: &ModelParams,
    bound: &BoundParams,
    batch: &[SourceSet],
    gains: &[GainVector],
    weights: LossWeights,
) -> Result<NodeId> {
    match variant {
        Variant::Baseline => loss_baseline(g, params, bound, batch),
        Variant::Model1 => loss_model1(g, params, bound, batch, gains, weights),
        Variant::Model2 => loss_model2(g, params, bound, batch, gains, weights),
    }
}
