//! Procedural instrument stems with distinct spectral and temporal signatures.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstrumentFamily {
    HarmonicTone,
    NoiseBurstPercussion,
    LowBandTone,
    FilteredNoisePad,
    PluckedDecay,
}

/// Family order used when assigning families to source slots.
pub const FAMILY_ORDER: [InstrumentFamily; 5] = [
    InstrumentFamily::HarmonicTone,
    InstrumentFamily::NoiseBurstPercussion,
    InstrumentFamily::LowBandTone,
    InstrumentFamily::PluckedDecay,
    InstrumentFamily::FilteredNoisePad,
];

/// Instrument names matching `FAMILY_ORDER`.
pub const FAMILY_LABELS: [&str; 5] = ["piano", "drums", "bass", "guitars", "strings"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentSpec {
    pub family: InstrumentFamily,
    /// Fundamental (or centre) frequency band in Hz.
    pub f0_band: (f64, f64),
    /// Note / hit spacing range in seconds.
    pub event_s: (f64, f64),
    /// Peak amplitude range, within `(0, 1]`.
    pub amplitude: (f64, f64),
}

impl InstrumentFamily {
    pub fn default_spec(self) -> InstrumentSpec {
        let (f0_band, event_s) = match self {
            InstrumentFamily::HarmonicTone => ((220.0, 660.0), (0.25, 0.5)),
            InstrumentFamily::NoiseBurstPercussion => ((1000.0, 3000.0), (0.12, 0.25)),
            InstrumentFamily::LowBandTone => ((45.0, 110.0), (0.4, 0.8)),
            InstrumentFamily::FilteredNoisePad => ((500.0, 1500.0), (0.5, 1.0)),
            InstrumentFamily::PluckedDecay => ((110.0, 330.0), (0.2, 0.4)),
        };
        InstrumentSpec {
            family: self,
            f0_band,
            event_s,
            amplitude: (0.3, 0.8),
        }
    }
}

impl InstrumentSpec {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        let (lo, hi) = self.f0_band;
        if !(lo > 0.0 && lo <= hi && hi < nyquist) {
            return Err(Error::invalid(format!(
                "f0 band ({lo}, {hi}) Hz must lie inside (0, {nyquist}) Hz"
            )));
        }
        let (alo, ahi) = self.amplitude;
        if !(alo > 0.0 && alo <= ahi && ahi <= 1.0) {
            return Err(Error::invalid(format!("amplitude range ({alo}, {ahi}) must lie in (0, 1]")));
        }
        let (elo, ehi) = self.event_s;
        if !(elo > 0.0 && elo <= ehi) {
            return Err(Error::invalid(format!("event spacing ({elo}, {ehi}) s is invalid")));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Splits `n` samples into consecutive events with random lengths.
fn events(rng: &mut ChaCha8Rng, n: usize, sr: f64, spacing: (f64, f64)) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let len = ((draw(rng, spacing) * sr) as usize).max(1);
        out.push((start, len.min(n - start)));
        start += len;
    }
    out
}

fn harmonic_notes(rng: &mut ChaCha8Rng, spec: &InstrumentSpec, n: usize, sr: f64, partial_decay: f64, max_partials: usize) -> Vec<f64> {
    let nyquist = sr / 2.0;
    let mut out = vec![0.0; n];
    let attack = (0.01 * sr) as usize;
    for (start, len) in events(rng, n, sr, spec.event_s) {
        let f0 = draw(rng, spec.f0_band);
        let phase0 = rng.random_range(0.0..2.0 * PI);
        let partials: Vec<(f64, f64)> = (1..=max_partials)
            .map(|h| (h as f64 * f0, partial_decay.powi(h as i32 - 1)))
            .take_while(|(f, _)| *f < 0.9 * nyquist)
            .collect();
        let release = (len / 4).max(1);
        for i in 0..len {
            let t = i as f64 / sr;
            let env_a = if i < attack { i as f64 / attack as f64 } else { 1.0 };
            let env_r = if i + release > len { (len - i) as f64 / release as f64 } else { 1.0 };
            let env = env_a * (0.6 + 0.4 * env_r) * (-1.5 * t).exp();
            let v: f64 = partials
                .iter()
                .map(|&(f, a)| a * (2.0 * PI * f * t + phase0).sin())
                .sum();
            out[start + i] = env * v;
        }
    }
    out
}

fn noise_bursts(rng: &mut ChaCha8Rng, spec: &InstrumentSpec, n: usize, sr: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (start, len) in events(rng, n, sr, spec.event_s) {
        let tau = rng.random_range(0.02..0.06);
        let accent = rng.random_range(0.5..1.0);
        // one-pole high-pass emphasis around the configured band
        let mut prev = 0.0;
        for i in 0..len {
            let w: f64 = rng.random_range(-1.0..1.0);
            let hp = w - 0.6 * prev;
            prev = w;
            out[start + i] = accent * hp * (-(i as f64 / sr) / tau).exp();
        }
    }
    out
}

fn noise_pad(rng: &mut ChaCha8Rng, spec: &InstrumentSpec, n: usize, sr: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let lfo_hz = rng.random_range(0.5..2.0);
    let lfo_phase = rng.random_range(0.0..2.0 * PI);
    for (start, len) in events(rng, n, sr, spec.event_s) {
        let fc = draw(rng, spec.f0_band);
        // two-pole resonator centred on fc
        let r: f64 = 0.98;
        let a1 = 2.0 * r * (2.0 * PI * fc / sr).cos();
        let a2 = -r * r;
        let (mut y1, mut y2) = (0.0, 0.0);
        for i in 0..len {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y = (1.0 - r) * x + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            let t = (start + i) as f64 / sr;
            out[start + i] = y * (0.7 + 0.3 * (2.0 * PI * lfo_hz * t + lfo_phase).sin());
        }
    }
    out
}

fn plucked(rng: &mut ChaCha8Rng, spec: &InstrumentSpec, n: usize, sr: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (start, len) in events(rng, n, sr, spec.event_s) {
        let f0 = draw(rng, spec.f0_band);
        let period = ((sr / f0).round() as usize).max(2);
        let mut line: Vec<f64> = (0..period).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut idx = 0;
        for i in 0..len {
            let next = (idx + 1) % period;
            let v = line[idx];
            line[idx] = 0.996 * 0.5 * (line[idx] + line[next]);
            idx = next;
            out[start + i] = v;
        }
    }
    out
}

/// Renders `duration_s` seconds of one instrument; the peak is set to an
/// amplitude drawn from `spec.amplitude`.
pub fn synth_source(spec: &InstrumentSpec, duration_s: f64, sample_rate: u32, seed: u64) -> Result<Waveform> {
    if !(duration_s > 0.0) {
        return Err(Error::invalid(format!("duration {duration_s} s must be positive")));
    }
    spec.validate(sample_rate)?;
    let n = ((duration_s * sample_rate as f64).round() as usize).max(1);
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amplitude = draw(&mut rng, spec.amplitude);
    let mut x = match spec.family {
        InstrumentFamily::HarmonicTone => harmonic_notes(&mut rng, spec, n, sr, 0.6, 8),
        InstrumentFamily::LowBandTone => harmonic_notes(&mut rng, spec, n, sr, 0.5, 3),
        InstrumentFamily::NoiseBurstPercussion => noise_bursts(&mut rng, spec, n, sr),
        InstrumentFamily::FilteredNoisePad => noise_pad(&mut rng, spec, n, sr),
        InstrumentFamily::PluckedDecay => plucked(&mut rng, spec, n, sr),
    };
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = amplitude / peak;
        for v in &mut x {
            *v *= g;
        }
    }
    Ok(Waveform::new(x, sample_rate))
}
