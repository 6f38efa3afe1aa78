//! Knob-sweep evaluation: remix quality and loudness accuracy per gain
//! setting, per-source separation scores, and the report files.

mod report;
mod stats;

use serde::{Deserialize, Serialize};

use crate::data::{load_segments, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::metrics::{bss_decompose, loudness_ls, remix_quality, sar, sdr_sep, sir};
use crate::model::{decode_cached, forward_separate, remix_from_estimates, Checkpoint, Variant};
use crate::signal::{mix, remix_target, GainVector, SourceSet, Waveform};

pub use report::{
    curve, read_records_csv, summarize, write_curves, write_records_csv, write_report, CurveRow, GroupSummary, Summary,
    VariantSummary,
};
pub use stats::{mean_std, quartiles, Distribution};

/// Evaluation segment length and hop, in seconds.
pub const EVAL_SEGMENT_S: f64 = 1.0;

/// One-source-at-a-time gain grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub min_db: f64,
    pub max_db: f64,
    pub step_db: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            min_db: -24.0,
            max_db: 24.0,
            step_db: 3.0,
        }
    }
}

/// A gain vector of the sweep and the source it manipulates (`None` for the shared 0 dB point).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub source: Option<usize>,
    pub gain_db: f64,
    pub gains: GainVector,
}

impl SweepSpec {
    /// Gain values of one source's curve, including 0 dB.
    pub fn levels(&self) -> Result<Vec<f64>> {
        if !(self.step_db > 0.0) || !(self.min_db <= 0.0 && self.max_db >= 0.0) {
            return Err(Error::invalid(format!("sweep {self:?} must bracket 0 dB with a positive step")));
        }
        let lo = (self.min_db / self.step_db).round() as i64;
        let hi = (self.max_db / self.step_db).round() as i64;
        Ok((lo..=hi).map(|i| i as f64 * self.step_db).collect())
    }

    /// The shared 0 dB point first, then every nonzero level of source 0, source 1, ...
    pub fn points(&self, k: usize) -> Result<Vec<SweepPoint>> {
        if k < 2 {
            return Err(Error::invalid(format!("a sweep needs at least two sources, got {k}")));
        }
        let mut out = vec![SweepPoint {
            source: None,
            gain_db: 0.0,
            gains: GainVector::unity(k),
        }];
        let levels = self.levels()?;
        for src in 0..k {
            for &db in levels.iter().filter(|&&d| d != 0.0) {
                let mut v = vec![0.0; k];
                v[src] = db;
                out.push(SweepPoint {
                    source: Some(src),
                    gain_db: db,
                    gains: GainVector::from_db(v)?,
                });
            }
        }
        Ok(out)
    }
}

/// Gain vectors of the default sweep: `16K + 1` of them.
pub fn enumerate_sweep(k: usize) -> Result<Vec<GainVector>> {
    Ok(SweepSpec::default().points(k)?.into_iter().map(|p| p.gains).collect())
}

/// One (segment, gain vector, model) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub track_id: String,
    pub segment: usize,
    /// Manipulated source; `None` at the shared 0 dB point.
    pub source: Option<usize>,
    pub gain_db: f64,
    pub variant: String,
    pub min_sdr: f64,
    pub snr: f64,
    pub sd_sdr: f64,
    /// Loudness difference of every source; NaN when the sources are linearly dependent.
    pub ld: Vec<f64>,
    /// LD of the manipulated source, or the mean over sources at the 0 dB point.
    pub ld_manipulated: f64,
}

/// Something that produces source estimates and remixes for the harness.
pub trait Separator {
    /// Name written to the `variant` column.
    fn name(&self) -> String;
    fn num_sources(&self) -> usize;
    fn sample_rate(&self) -> u32;
    /// Source estimates of mixture `x`; `truth` is available to oracle implementations.
    fn separate(&self, x: &Waveform, truth: &SourceSet) -> Result<Vec<Waveform>>;
    /// Remix of `x` for every gain vector, in order.
    fn remix(&self, x: &Waveform, truth: &SourceSet, gains: &[GainVector]) -> Result<Vec<Waveform>>;
}

impl Separator for Checkpoint {
    fn name(&self) -> String {
        self.variant.to_string()
    }

    fn num_sources(&self) -> usize {
        self.k()
    }

    fn sample_rate(&self) -> u32 {
        self.params.config.sample_rate
    }

    fn separate(&self, x: &Waveform, _truth: &SourceSet) -> Result<Vec<Waveform>> {
        Ok(forward_separate(&self.params, x)?.estimates)
    }

    fn remix(&self, x: &Waveform, _truth: &SourceSet, gains: &[GainVector]) -> Result<Vec<Waveform>> {
        let sep = forward_separate(&self.params, x)?;
        gains
            .iter()
            .map(|g| match self.variant {
                Variant::Model2 => {
                    let scaled = decode_cached(&self.params, &sep, Some(g))?;
                    Ok(crate::signal::weighted_sum(&scaled, &vec![1.0; scaled.len()]))
                }
                Variant::Baseline | Variant::Model1 => remix_from_estimates(&sep, g),
            })
            .collect()
    }
}

fn check_compat(model: &dyn Separator, manifest: &DatasetManifest) -> Result<()> {
    if model.num_sources() != manifest.k {
        return Err(Error::invalid(format!(
            "model separates {} sources but the dataset has {}",
            model.num_sources(),
            manifest.k
        )));
    }
    if model.sample_rate() != manifest.sample_rate {
        return Err(Error::invalid(format!(
            "model runs at {} Hz but the dataset is {} Hz",
            model.sample_rate(),
            manifest.sample_rate
        )));
    }
    Ok(())
}

/// Metric values, with undefined cases (silent or dependent sources) mapped to NaN.
fn or_nan3<T>(r: Result<T>, f: impl FnOnce(T) -> [f64; 3]) -> Result<[f64; 3]> {
    match r {
        Ok(v) => Ok(f(v)),
        Err(Error::Domain(_)) | Err(Error::Degenerate(_)) => Ok([f64::NAN; 3]),
        Err(e) => Err(e),
    }
}

/// Scores every sweep point on one segment.
pub fn evaluate_segment(
    model: &dyn Separator,
    track_id: &str,
    segment: usize,
    sources: &SourceSet,
    sweep: &[SweepPoint],
) -> Result<Vec<EvalRecord>> {
    let x = mix(sources);
    let gains: Vec<GainVector> = sweep.iter().map(|p| p.gains.clone()).collect();
    let remixes = model.remix(&x, sources, &gains)?;
    if remixes.len() != sweep.len() {
        return Err(Error::invalid(format!("{} remixes for {} gain vectors", remixes.len(), sweep.len())));
    }
    let name = model.name();
    let mut out = Vec::with_capacity(sweep.len());
    for (p, est) in sweep.iter().zip(&remixes) {
        let y = remix_target(sources, &p.gains)?;
        let (snr, sd_sdr, min_sdr) = match remix_quality(&y, est) {
            Ok(q) => (q.snr, q.sd_sdr, q.min_sdr),
            Err(Error::Domain(_)) => (f64::NAN, f64::NAN, f64::NAN),
            Err(e) => return Err(e),
        };
        let ld = match loudness_ls(est, sources, &p.gains) {
            Ok(r) => r.ld_db,
            Err(Error::Degenerate(_)) => vec![f64::NAN; sources.k()],
            Err(e) => return Err(e),
        };
        let ld_manipulated = match p.source {
            Some(k) => ld[k],
            None => ld.iter().sum::<f64>() / ld.len() as f64,
        };
        out.push(EvalRecord {
            track_id: track_id.to_string(),
            segment,
            source: p.source,
            gain_db: p.gain_db,
            variant: name.clone(),
            min_sdr,
            snr,
            sd_sdr,
            ld,
            ld_manipulated,
        });
    }
    Ok(out)
}

/// Deterministic record order: track, segment, source (0 dB point first), gain, variant.
pub fn sort_records(records: &mut [EvalRecord]) {
    records.sort_by(|a, b| {
        a.track_id
            .cmp(&b.track_id)
            .then(a.segment.cmp(&b.segment))
            .then(a.source.cmp(&b.source))
            .then(a.gain_db.total_cmp(&b.gain_db))
            .then(a.variant.cmp(&b.variant))
    });
}

/// Runs the sweep over every `EVAL_SEGMENT_S` window of `split`; silent windows are kept.
pub fn evaluate(
    model: &dyn Separator,
    manifest: &DatasetManifest,
    split: Split,
    sweep: &SweepSpec,
) -> Result<Vec<EvalRecord>> {
    check_compat(model, manifest)?;
    let points = sweep.points(manifest.k)?;
    let mut records = Vec::new();
    for seg in load_segments(manifest, split, EVAL_SEGMENT_S, EVAL_SEGMENT_S, false)? {
        records.extend(evaluate_segment(model, &seg.track_id, seg.index, &seg.sources, &points)?);
    }
    sort_records(&mut records);
    Ok(records)
}

/// SDR, SIR and SAR distributions of one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScores {
    pub source: String,
    pub sdr: Distribution,
    pub sir: Distribution,
    pub sar: Distribution,
}

/// Raw per-segment separation scores, `[source][segment]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeparationSamples {
    pub sdr: Vec<Vec<f64>>,
    pub sir: Vec<Vec<f64>>,
    pub sar: Vec<Vec<f64>>,
}

pub fn separation_samples(model: &dyn Separator, segments: &[SourceSet]) -> Result<SeparationSamples> {
    let k = model.num_sources();
    let mut s = SeparationSamples {
        sdr: vec![Vec::new(); k],
        sir: vec![Vec::new(); k],
        sar: vec![Vec::new(); k],
    };
    for set in segments {
        let est = model.separate(&mix(set), set)?;
        for (i, e) in est.iter().enumerate() {
            let scores = or_nan3(bss_decompose(e, set, i), |d| [sdr_sep(&d), sir(&d), sar(&d)])?;
            s.sdr[i].push(scores[0]);
            s.sir[i].push(scores[1]);
            s.sar[i].push(scores[2]);
        }
    }
    Ok(s)
}

/// Per-source SDR/SIR/SAR quartiles over every evaluation window of `split`.
pub fn separation_scores(model: &dyn Separator, manifest: &DatasetManifest, split: Split) -> Result<Vec<SourceScores>> {
    check_compat(model, manifest)?;
    let segments: Vec<SourceSet> = load_segments(manifest, split, EVAL_SEGMENT_S, EVAL_SEGMENT_S, false)?
        .into_iter()
        .map(|s| s.sources)
        .collect();
    let raw = separation_samples(model, &segments)?;
    Ok(manifest
        .labels
        .iter()
        .enumerate()
        .map(|(i, label)| SourceScores {
            source: label.clone(),
            sdr: quartiles(&raw.sdr[i]),
            sir: quartiles(&raw.sir[i]),
            sar: quartiles(&raw.sar[i]),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_counts_and_order() {
        for k in 2..=5 {
            let pts = SweepSpec::default().points(k).unwrap();
            assert_eq!(pts.len(), 16 * k + 1);
            assert!(pts[0].gains.is_unity());
            assert_eq!(pts[1].source, Some(0));
            assert_eq!(pts[1].gain_db, -24.0);
        }
        assert!(enumerate_sweep(1).is_err());
        assert_eq!(SweepSpec::default().levels().unwrap().len(), 17);
    }
}
