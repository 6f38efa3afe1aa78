//! Audio carriers and the mixing arithmetic shared by every other module.
//!
//! Gains are stored in dB and converted to linear amplitude ratios with the
//! amplitude convention `gamma = 10^(dB / 20)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default processing rate for the synthetic pipeline.
pub const DEFAULT_SAMPLE_RATE: u32 = 8000;

/// Default activity threshold used when filtering training segments.
pub const DEFAULT_ACTIVE_THRESHOLD_DB: f64 = -40.0;

/// Training gains are drawn from `[-TRAIN_GAIN_RANGE_DB, TRAIN_GAIN_RANGE_DB]`.
pub const TRAIN_GAIN_RANGE_DB: f64 = 12.0;

/// Mono audio buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Waveform {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Waveform::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Level in dB relative to full scale, `10 log10(mean square)`.
    pub fn rms_db(&self) -> f64 {
        if self.samples.is_empty() {
            return f64::NEG_INFINITY;
        }
        let mean_square = self.energy() / self.samples.len() as f64;
        10.0 * mean_square.log10()
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform::new(
            self.samples.iter().map(|x| x * gain).collect(),
            self.sample_rate,
        )
    }

    pub fn slice(&self, start: usize, len: usize) -> Waveform {
        Waveform::new(self.samples[start..start + len].to_vec(), self.sample_rate)
    }
}

impl AsRef<[f64]> for Waveform {
    fn as_ref(&self) -> &[f64] {
        &self.samples
    }
}

/// Ordered, label-bound collection of equal-length stems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSet {
    sources: Vec<Waveform>,
    labels: Vec<String>,
}

impl SourceSet {
    pub fn new(sources: Vec<Waveform>, labels: Vec<String>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::invalid("source set must contain at least one source"));
        }
        if sources.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} sources but {} labels",
                sources.len(),
                labels.len()
            )));
        }
        let len = sources[0].len();
        let rate = sources[0].sample_rate;
        for (k, s) in sources.iter().enumerate() {
            if s.len() != len {
                return Err(Error::invalid(format!(
                    "source {k} has {} samples, expected {len}",
                    s.len()
                )));
            }
            if s.sample_rate != rate {
                return Err(Error::invalid(format!(
                    "source {k} sampled at {} Hz, expected {rate} Hz",
                    s.sample_rate
                )));
            }
        }
        Ok(SourceSet { sources, labels })
    }

    /// Builds a set with generic labels `source0`, `source1`, ...
    pub fn unlabeled(sources: Vec<Waveform>) -> Result<Self> {
        let labels = (0..sources.len()).map(|k| format!("source{k}")).collect();
        SourceSet::new(sources, labels)
    }

    pub fn k(&self) -> usize {
        self.sources.len()
    }

    pub fn len(&self) -> usize {
        self.sources[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sources[0].sample_rate
    }

    pub fn sources(&self) -> &[Waveform] {
        &self.sources
    }

    pub fn source(&self, k: usize) -> &Waveform {
        &self.sources[k]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn slice(&self, start: usize, len: usize) -> SourceSet {
        SourceSet {
            sources: self.sources.iter().map(|s| s.slice(start, len)).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn scaled(&self, gain: f64) -> SourceSet {
        SourceSet {
            sources: self.sources.iter().map(|s| s.scaled(gain)).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Per-source volume change, stored in dB with cached linear ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct GainVector {
    db: Vec<f64>,
    linear: Vec<f64>,
}

impl GainVector {
    pub fn from_db(db: Vec<f64>) -> Result<Self> {
        let linear = db.iter().map(|&d| db_to_linear(d)).collect::<Result<Vec<_>>>()?;
        Ok(GainVector { db, linear })
    }

    /// Keeps the given ratios verbatim and derives the dB values.
    pub fn from_linear(linear: &[f64]) -> Result<Self> {
        let db = linear
            .iter()
            .map(|&g| linear_to_db(g))
            .collect::<Result<Vec<_>>>()?;
        Ok(GainVector {
            db,
            linear: linear.to_vec(),
        })
    }

    /// Applies `other` on top of `self`: dB values add, ratios multiply.
    pub fn compose(&self, other: &GainVector) -> Result<GainVector> {
        if self.k() != other.k() {
            return Err(Error::invalid("composed gain vectors differ in length"));
        }
        Ok(GainVector {
            db: self.db.iter().zip(&other.db).map(|(a, b)| a + b).collect(),
            linear: self
                .linear
                .iter()
                .zip(&other.linear)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    /// All sources at 0 dB.
    pub fn unity(k: usize) -> Self {
        GainVector {
            db: vec![0.0; k],
            linear: vec![1.0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.db.len()
    }

    pub fn db(&self) -> &[f64] {
        &self.db
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn is_unity(&self) -> bool {
        self.db.iter().all(|&d| d == 0.0)
    }
}

pub fn db_to_linear(db: f64) -> Result<f64> {
    if !db.is_finite() {
        return Err(Error::invalid(format!("gain {db} dB is not finite")));
    }
    // exact identity keeps unity-gain remixes bit-equal to plain mixes
    if db == 0.0 {
        return Ok(1.0);
    }
    Ok(10f64.powf(db / 20.0))
}

pub fn linear_to_db(ratio: f64) -> Result<f64> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::Domain(format!(
            "amplitude ratio {ratio} must be positive and finite"
        )));
    }
    Ok(20.0 * ratio.log10())
}

/// Elementwise sum of all sources.
pub fn mix(set: &SourceSet) -> Waveform {
    let mut out = vec![0.0; set.len()];
    for s in set.sources() {
        for (o, x) in out.iter_mut().zip(&s.samples) {
            *o += x;
        }
    }
    Waveform::new(out, set.sample_rate())
}

/// `sum_k gamma_k * s_k`.
pub fn remix_target(set: &SourceSet, gains: &GainVector) -> Result<Waveform> {
    if gains.k() != set.k() {
        return Err(Error::invalid(format!(
            "{} gains for {} sources",
            gains.k(),
            set.k()
        )));
    }
    Ok(weighted_sum(set.sources(), gains.linear()))
}

/// Sums waveforms weighted by linear factors; lengths must already agree.
pub(crate) fn weighted_sum(waves: &[Waveform], weights: &[f64]) -> Waveform {
    let mut out = vec![0.0; waves[0].len()];
    for (w, &g) in waves.iter().zip(weights) {
        if g == 1.0 {
            for (o, x) in out.iter_mut().zip(&w.samples) {
                *o += x;
            }
        } else {
            for (o, x) in out.iter_mut().zip(&w.samples) {
                *o += g * x;
            }
        }
    }
    Waveform::new(out, waves[0].sample_rate)
}

/// Draws `k` i.i.d. gains uniformly from the training range.
pub fn sample_training_gains(k: usize, rng_seed: u64) -> GainVector {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_gains_with(&mut rng, k, TRAIN_GAIN_RANGE_DB)
}

pub fn sample_gains_with<R: Rng>(rng: &mut R, k: usize, range_db: f64) -> GainVector {
    let db = (0..k)
        .map(|_| rng.random_range(-range_db..=range_db))
        .collect();
    GainVector::from_db(db).expect("sampled gains are finite")
}

fn samples_for(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

/// Cuts consecutive windows; a trailing partial window is dropped.
pub fn segment(w: &Waveform, length_s: f64, hop_s: f64) -> Vec<Waveform> {
    segment_bounds(w.len(), w.sample_rate, length_s, hop_s)
        .into_iter()
        .map(|(start, len)| w.slice(start, len))
        .collect()
}

/// `(start, len)` of every full window in a signal of `n` samples.
pub fn segment_bounds(n: usize, sample_rate: u32, length_s: f64, hop_s: f64) -> Vec<(usize, usize)> {
    let len = samples_for(length_s, sample_rate);
    let hop = samples_for(hop_s, sample_rate);
    if len == 0 || hop == 0 || n < len {
        return Vec::new();
    }
    (0..=(n - len) / hop).map(|i| (i * hop, len)).collect()
}

/// True iff every source's level is strictly above `threshold_db` dBFS.
pub fn is_active_segment(set: &SourceSet, threshold_db: f64) -> bool {
    set.sources().iter().all(|s| s.rms_db() > threshold_db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(v: &[f64]) -> Waveform {
        Waveform::new(v.to_vec(), 8000)
    }

    #[test]
    fn db_conversion_examples() {
        assert!((db_to_linear(10.0).unwrap() - 3.1623).abs() < 1e-3);
        assert_eq!(db_to_linear(0.0).unwrap(), 1.0);
        assert!((db_to_linear(-12.0).unwrap() - 0.251_188_643_150_958).abs() < 1e-12);
        assert!(db_to_linear(f64::NAN).is_err());
        assert!(db_to_linear(f64::INFINITY).is_err());

        assert!((linear_to_db(3.1623).unwrap() - 10.0).abs() < 0.01);
        assert_eq!(linear_to_db(1.0).unwrap(), 0.0);
        assert!((linear_to_db(0.5).unwrap() + 6.020_599_913_279_624).abs() < 1e-12);
        assert!(matches!(linear_to_db(0.0), Err(Error::Domain(_))));
        assert!(matches!(linear_to_db(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn mix_impulses_and_cancellation() {
        let a = wave(&[1.0, 0.0, 0.0, 0.0]);
        let b = wave(&[0.0, 0.0, 1.0, 0.0]);
        let set = SourceSet::unlabeled(vec![a.clone(), b]).unwrap();
        assert_eq!(mix(&set).samples, vec![1.0, 0.0, 1.0, 0.0]);

        let neg = a.scaled(-1.0);
        let set = SourceSet::unlabeled(vec![a, neg]).unwrap();
        assert!(mix(&set).samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mismatched_sources_rejected() {
        let a = wave(&[1.0, 2.0]);
        let b = wave(&[1.0]);
        assert!(SourceSet::unlabeled(vec![a.clone(), b]).is_err());
        let c = Waveform::new(vec![1.0, 2.0], 16000);
        assert!(SourceSet::unlabeled(vec![a.clone(), c]).is_err());
        assert!(SourceSet::new(vec![a], vec![]).is_err());
    }

    #[test]
    fn remix_unity_is_mix_and_dimension_checked() {
        let set = SourceSet::unlabeled(vec![wave(&[0.1, -0.3, 0.7]), wave(&[0.2, 0.9, -0.4])]).unwrap();
        let y = remix_target(&set, &GainVector::unity(2)).unwrap();
        assert_eq!(y, mix(&set));
        assert!(remix_target(&set, &GainVector::unity(3)).is_err());
    }

    #[test]
    fn remix_single_source_doubling() {
        let s = wave(&[0.25, -0.5, 0.125]);
        let set = SourceSet::unlabeled(vec![s.clone()]).unwrap();
        let g = GainVector::from_linear(&[2.0]).unwrap();
        let y = remix_target(&set, &g).unwrap();
        for (a, b) in y.samples.iter().zip(&s.samples) {
            assert!((a - 2.0 * b).abs() <= 1e-15);
        }
    }

    #[test]
    fn training_gains_deterministic() {
        let a = sample_training_gains(4, 17);
        let b = sample_training_gains(4, 17);
        assert_eq!(a, b);
        let one = sample_training_gains(1, 3);
        assert_eq!(one.k(), 1);
        assert!(one.db()[0].abs() <= 12.0);
    }

    #[test]
    fn segment_counts() {
        let w = Waveform::zeros(28000, 8000);
        assert_eq!(segment(&w, 1.0, 1.0).len(), 3);
        let w = Waveform::zeros(4000, 8000);
        assert!(segment(&w, 1.0, 1.0).is_empty());
        let w = Waveform::zeros(16000, 8000);
        let segs = segment(&w, 1.0, 0.5);
        assert_eq!(segs.len(), 3);
        assert!(segs.iter().all(|s| s.len() == 8000));
    }

    #[test]
    fn activity_threshold() {
        let n = 800;
        let sine: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let full = SourceSet::unlabeled(vec![wave(&sine), wave(&sine)]).unwrap();
        assert!(is_active_segment(&full, DEFAULT_ACTIVE_THRESHOLD_DB));

        let silent = SourceSet::unlabeled(vec![wave(&sine), Waveform::zeros(n, 8000)]).unwrap();
        assert!(!is_active_segment(&silent, DEFAULT_ACTIVE_THRESHOLD_DB));

        // +/-0.5 square wave has mean square exactly 0.25
        let square: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let set = SourceSet::unlabeled(vec![wave(&square), wave(&sine)]).unwrap();
        let at = 10.0 * 0.25f64.log10();
        assert!(!is_active_segment(&set, at));
        assert!(is_active_segment(&set, at - 1e-9));
    }
}
