//! Library metrics against the loop-based oracles on random instances.

use rand::Rng;
use remixer::metrics;
use remixer::signal::{remix_target, GainVector, SourceSet, Waveform};

use super::*;

#[derive(Debug, Default)]
pub struct MetricReport {
    pub instances: usize,
    pub max_snr: f64,
    pub max_si_sdr: f64,
    pub max_sd_sdr: f64,
    pub max_min_sdr: f64,
    pub max_bss: f64,
    pub max_ld: f64,
    /// `sd_sdr - (snr + 20 log10 |alpha|)`.
    pub max_sd_identity: f64,
    /// Distance between the remix error and its expansion over per-source errors.
    pub max_rearrangement: f64,
}

fn track(m: &mut f64, a: f64, b: f64) {
    let d = if a == b { 0.0 } else { (a - b).abs() };
    assert!(!d.is_nan(), "{a} vs {b}");
    *m = m.max(d);
}

pub fn run(n: usize, seed: u64) -> MetricReport {
    let mut r = rng(seed);
    let mut rep = MetricReport::default();
    for _ in 0..n {
        let len = r.random_range(16..400);
        let k = r.random_range(2..=5);
        let s = randn_vec(&mut r, len);
        let noise_level: f64 = 10f64.powf(r.random_range(-4.0..0.5));
        let scale: f64 = r.random_range(0.2..2.0) * if r.random_bool(0.1) { -1.0 } else { 1.0 };
        let e: Vec<f64> = s
            .iter()
            .map(|v| scale * v + noise_level * r.random_range(-1.0..1.0))
            .collect();

        track(&mut rep.max_snr, metrics::snr(&s, &e).unwrap(), snr(&s, &e));
        track(&mut rep.max_si_sdr, metrics::si_sdr(&s, &e).unwrap(), si_sdr(&s, &e));
        track(&mut rep.max_sd_sdr, metrics::sd_sdr(&s, &e).unwrap(), sd_sdr(&s, &e));
        track(&mut rep.max_min_sdr, metrics::min_sdr(&s, &e).unwrap(), min_sdr(&s, &e));

        // without the floor, sd_sdr = snr + 20 log10 |alpha| exactly
        let alpha = inner(&e, &s) / energy(&s);
        let err: Vec<f64> = e.iter().zip(&s).map(|(a, b)| a - b).collect();
        let snr_raw = 10.0 * (energy(&s) / energy(&err)).log10();
        let sd_raw = 10.0 * (alpha * alpha * energy(&s) / energy(&err)).log10();
        track(&mut rep.max_sd_identity, sd_raw, snr_raw + 20.0 * alpha.abs().log10());

        let srcs: Vec<Vec<f64>> = (0..k).map(|_| randn_vec(&mut r, len)).collect();
        let set = SourceSet::unlabeled(srcs.iter().map(|v| Waveform::new(v.clone(), 8000)).collect()).unwrap();
        let coef: Vec<f64> = (0..k).map(|_| r.random_range(0.1..2.0)).collect();
        let mut est = vec![0.0; len];
        for (c, sv) in coef.iter().zip(&srcs) {
            for i in 0..len {
                est[i] += c * sv[i];
            }
        }
        for v in est.iter_mut() {
            *v += 0.05 * r.random_range(-1.0..1.0);
        }
        let t = r.random_range(0..k);
        let d = metrics::bss_decompose(&est, &set, t).unwrap();
        let (_, target, interf, art) = bss(&est, &srcs, t);
        track(&mut rep.max_bss, metrics::sir(&d), ratio_db(energy(&target), energy(&interf)));
        track(&mut rep.max_bss, metrics::sar(&d), ratio_db(energy(&add(&target, &interf)), energy(&art)));
        track(&mut rep.max_bss, metrics::sdr_sep(&d), ratio_db(energy(&target), energy(&add(&interf, &art))));

        let gains_db: Vec<f64> = (0..k).map(|_| r.random_range(-12.0..12.0)).collect();
        let gv = GainVector::from_db(gains_db.clone()).unwrap();
        let ld = metrics::loudness_ls(&est, &set, &gv).unwrap();
        let fitted = lstsq(&srcs, &est);
        for j in 0..k {
            track(&mut rep.max_ld, ld.ld_db[j], (20.0 * fitted[j].log10() - gains_db[j]).abs());
        }

        // y - sum g_k e_k equals sum g_k (s_k - e_k)
        let ests: Vec<Vec<f64>> = srcs
            .iter()
            .map(|sv| sv.iter().map(|v| v * r.random_range(0.5..1.5)).collect())
            .collect();
        let g = gv.linear();
        let y = remix_target(&set, &gv).unwrap();
        let est_w: Vec<Waveform> = ests.iter().map(|v| Waveform::new(v.clone(), 8000)).collect();
        let yh = remix_target(&SourceSet::unlabeled(est_w).unwrap(), &gv).unwrap();
        for i in 0..len {
            let expanded: f64 = (0..k).map(|j| g[j] * (srcs[j][i] - ests[j][i])).sum();
            track(&mut rep.max_rearrangement, y.samples[i] - yh.samples[i], expanded);
        }
        rep.instances += 1;
    }
    rep
}
