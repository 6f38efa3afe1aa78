//! Separation and remix quality measures.
//!
//! Every log-ratio metric shares one regulariser: the error energy is floored
//! by `EPS_REL` times the numerator energy, which caps scores at
//! [`CAP_DB`]. Results that are undefined (zero target energy) are reported as
//! `f64::NEG_INFINITY` rather than as errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, least_squares};
use crate::signal::{GainVector, SourceSet};

/// Relative energy floor added to every error term.
pub const EPS_REL: f64 = 1e-12;

/// Largest reportable score, `-10 log10(EPS_REL)`.
pub const CAP_DB: f64 = 120.0;

fn energy(x: &[f64]) -> f64 {
    dot(x, x)
}

fn check_pair(reference: &[f64], estimate: &[f64]) -> Result<()> {
    if reference.is_empty() {
        return Err(Error::invalid("empty signal"));
    }
    if reference.len() != estimate.len() {
        return Err(Error::invalid(format!(
            "reference has {} samples, estimate has {}",
            reference.len(),
            estimate.len()
        )));
    }
    Ok(())
}

/// `10 log10(num / (den + eps * num))`, capped; zero numerator maps to -inf.
pub fn ratio_db(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (10.0 * (num / (den + EPS_REL * num)).log10()).min(CAP_DB)
}

fn error_energy(reference: &[f64], estimate: &[f64], scale: f64) -> f64 {
    reference
        .iter()
        .zip(estimate)
        .map(|(s, e)| {
            let d = e - scale * s;
            d * d
        })
        .sum()
}

fn nonzero_reference(reference: &[f64]) -> Result<f64> {
    let e = energy(reference);
    if e == 0.0 {
        return Err(Error::Domain("reference signal is all zeros".into()));
    }
    Ok(e)
}

/// Least-squares scale of `reference` that best explains `estimate`.
pub fn projection_scale(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_pair(reference, estimate)?;
    Ok(dot(estimate, reference) / nonzero_reference(reference)?)
}

/// Scale-sensitive signal-to-noise ratio, the training objective's metric.
pub fn snr(reference: impl AsRef<[f64]>, estimate: impl AsRef<[f64]>) -> Result<f64> {
    let (s, e) = (reference.as_ref(), estimate.as_ref());
    check_pair(s, e)?;
    let es = nonzero_reference(s)?;
    Ok(ratio_db(es, error_energy(s, e, 1.0)))
}

/// Scale-invariant SDR. Returns -inf when the estimate is orthogonal to the reference.
pub fn si_sdr(reference: impl AsRef<[f64]>, estimate: impl AsRef<[f64]>) -> Result<f64> {
    let (s, e) = (reference.as_ref(), estimate.as_ref());
    let alpha = projection_scale(s, e)?;
    if alpha == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let target = alpha * alpha * energy(s);
    Ok(ratio_db(target, error_energy(s, e, alpha)))
}

/// Scale-dependent SDR: scaled-reference energy over the unscaled error.
pub fn sd_sdr(reference: impl AsRef<[f64]>, estimate: impl AsRef<[f64]>) -> Result<f64> {
    let (s, e) = (reference.as_ref(), estimate.as_ref());
    let alpha = projection_scale(s, e)?;
    if alpha == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let es = energy(s);
    let den = error_energy(s, e, 1.0);
    if den == 0.0 {
        return Ok(CAP_DB);
    }
    Ok((10.0 * (alpha * alpha * es / (den + EPS_REL * es)).log10()).min(CAP_DB))
}

/// Remix quality: the smaller of SNR and SD-SDR.
pub fn min_sdr(reference: impl AsRef<[f64]>, estimate: impl AsRef<[f64]>) -> Result<f64> {
    let (s, e) = (reference.as_ref(), estimate.as_ref());
    Ok(snr(s, e)?.min(sd_sdr(s, e)?))
}

/// SNR, SD-SDR and minSDR of one remix in a single pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemixQuality {
    pub snr: f64,
    pub sd_sdr: f64,
    pub min_sdr: f64,
}

pub fn remix_quality(reference: impl AsRef<[f64]>, estimate: impl AsRef<[f64]>) -> Result<RemixQuality> {
    let (s, e) = (reference.as_ref(), estimate.as_ref());
    let snr = snr(s, e)?;
    let sd_sdr = sd_sdr(s, e)?;
    Ok(RemixQuality {
        snr,
        sd_sdr,
        min_sdr: snr.min(sd_sdr),
    })
}

/// Time-invariant-gain decomposition of an estimate onto the true sources.
#[derive(Debug, Clone, PartialEq)]
pub struct BssDecomposition {
    pub target_index: usize,
    /// Coefficient of the target source.
    pub alpha: f64,
    /// Coefficients of the other sources, in source order with the target skipped.
    pub beta: Vec<f64>,
    pub target: Vec<f64>,
    pub interference: Vec<f64>,
    pub artifact: Vec<f64>,
}

pub fn bss_decompose(
    estimate: impl AsRef<[f64]>,
    sources: &SourceSet,
    target_index: usize,
) -> Result<BssDecomposition> {
    let est = estimate.as_ref();
    if target_index >= sources.k() {
        return Err(Error::invalid(format!(
            "target index {target_index} out of range for {} sources",
            sources.k()
        )));
    }
    if est.len() != sources.len() {
        return Err(Error::invalid(format!(
            "estimate has {} samples, sources have {}",
            est.len(),
            sources.len()
        )));
    }
    let cols: Vec<&[f64]> = sources.sources().iter().map(|s| s.samples.as_slice()).collect();
    let coef = least_squares(&cols, est)?;

    let n = est.len();
    let mut target = vec![0.0; n];
    let mut interference = vec![0.0; n];
    let mut beta = Vec::with_capacity(coef.len() - 1);
    for (k, (&c, col)) in coef.iter().zip(&cols).enumerate() {
        let dst = if k == target_index {
            &mut target
        } else {
            beta.push(c);
            &mut interference
        };
        for (d, x) in dst.iter_mut().zip(col.iter()) {
            *d += c * x;
        }
    }
    let artifact = est
        .iter()
        .zip(target.iter().zip(&interference))
        .map(|(e, (t, i))| e - t - i)
        .collect();
    Ok(BssDecomposition {
        target_index,
        alpha: coef[target_index],
        beta,
        target,
        interference,
        artifact,
    })
}

/// Source-to-interference ratio.
pub fn sir(d: &BssDecomposition) -> f64 {
    ratio_db(energy(&d.target), energy(&d.interference))
}

/// Sources-to-artifacts ratio.
pub fn sar(d: &BssDecomposition) -> f64 {
    let wanted: Vec<f64> = d.target.iter().zip(&d.interference).map(|(t, i)| t + i).collect();
    ratio_db(energy(&wanted), energy(&d.artifact))
}

/// Signal-to-distortion ratio of the decomposition.
pub fn sdr_sep(d: &BssDecomposition) -> f64 {
    let distortion: Vec<f64> = d.interference.iter().zip(&d.artifact).map(|(i, a)| i + a).collect();
    ratio_db(energy(&d.target), energy(&distortion))
}

/// Gap between fitted per-source loudness of a remix and the intended gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoudnessReport {
    /// Least-squares coefficient of every source in the remix.
    pub fitted: Vec<f64>,
    /// Intended linear gains.
    pub target: Vec<f64>,
    /// `|20 log10 fitted - 20 log10 target|` per source; +inf where the fit is not positive.
    pub ld_db: Vec<f64>,
    pub ld_mean: f64,
    /// Sources whose fitted coefficient was not positive.
    pub nonpositive: Vec<bool>,
}

pub fn loudness_ls(
    estimate_remix: impl AsRef<[f64]>,
    sources: &SourceSet,
    target: &GainVector,
) -> Result<LoudnessReport> {
    let y = estimate_remix.as_ref();
    if target.k() != sources.k() {
        return Err(Error::invalid(format!(
            "{} gains for {} sources",
            target.k(),
            sources.k()
        )));
    }
    let cols: Vec<&[f64]> = sources.sources().iter().map(|s| s.samples.as_slice()).collect();
    let fitted = least_squares(&cols, y)?;
    let mut ld_db = Vec::with_capacity(fitted.len());
    let mut nonpositive = Vec::with_capacity(fitted.len());
    for (&c, &g) in fitted.iter().zip(target.linear()) {
        if c > 0.0 {
            ld_db.push((20.0 * c.log10() - 20.0 * g.log10()).abs());
            nonpositive.push(false);
        } else {
            ld_db.push(f64::INFINITY);
            nonpositive.push(true);
        }
    }
    let ld_mean = ld_db.iter().sum::<f64>() / ld_db.len() as f64;
    Ok(LoudnessReport {
        fitted,
        target: target.linear().to_vec(),
        ld_db,
        ld_mean,
        nonpositive,
    })
}
