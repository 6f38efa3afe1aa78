mod common;

use common::*;
use proptest::prelude::*;
use remixer::metrics::{self, CAP_DB};
use remixer::signal::{GainVector, SourceSet, Waveform};

#[test]
fn metrics_agree_with_loop_oracles() {
    let rep = metricsuite::run(200, 17);
    assert_eq!(rep.instances, 200);
    for (name, v) in [
        ("snr", rep.max_snr),
        ("si_sdr", rep.max_si_sdr),
        ("sd_sdr", rep.max_sd_sdr),
        ("min_sdr", rep.max_min_sdr),
        ("bss", rep.max_bss),
        ("ld", rep.max_ld),
    ] {
        assert!(v < 1e-6, "{name} deviates by {v:e} dB");
    }
    assert!(rep.max_sd_identity < 1e-9, "{:e}", rep.max_sd_identity);
    assert!(rep.max_rearrangement < 1e-9, "{:e}", rep.max_rearrangement);
}

#[test]
fn perfect_estimates_hit_the_cap() {
    let s = randn_vec(&mut rng(1), 100);
    assert_eq!(metrics::snr(&s, &s).unwrap(), CAP_DB);
    assert_eq!(metrics::sd_sdr(&s, &s).unwrap(), CAP_DB);
    assert_eq!(metrics::si_sdr(&s, &s).unwrap(), CAP_DB);
}

#[test]
fn zero_estimate_is_zero_db_snr_and_neg_inf_sdr() {
    let s = randn_vec(&mut rng(2), 50);
    let z = vec![0.0; 50];
    assert!((metrics::snr(&s, &z).unwrap()).abs() < 1e-9);
    assert_eq!(metrics::sd_sdr(&s, &z).unwrap(), f64::NEG_INFINITY);
    assert_eq!(metrics::si_sdr(&s, &z).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn silent_reference_is_a_domain_error() {
    let z = vec![0.0; 10];
    assert!(matches!(metrics::snr(&z, &z), Err(remixer::Error::Domain(_))));
    assert!(metrics::snr(&z[..3], &z).is_err());
}

#[test]
fn collinear_sources_are_degenerate() {
    let a = randn_vec(&mut rng(3), 40);
    let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
    let set = SourceSet::unlabeled(vec![Waveform::new(a.clone(), 8000), Waveform::new(b, 8000)]).unwrap();
    assert!(matches!(metrics::bss_decompose(&a, &set, 0), Err(remixer::Error::Degenerate(_))));
}

#[test]
fn loudness_of_exact_remix_is_zero() {
    let mut r = rng(4);
    let srcs: Vec<Waveform> = (0..3).map(|_| Waveform::new(randn_vec(&mut r, 200), 8000)).collect();
    let set = SourceSet::unlabeled(srcs).unwrap();
    let gv = GainVector::from_db(vec![-6.0, 3.0, 9.0]).unwrap();
    let y = remixer::signal::remix_target(&set, &gv).unwrap();
    let rep = metrics::loudness_ls(&y.samples, &set, &gv).unwrap();
    assert!(rep.ld_db.iter().all(|d| *d < 1e-9));
}

proptest! {
    #[test]
    fn snr_is_invariant_to_joint_scaling(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let s = randn_vec(&mut r, 64);
        let e = randn_vec(&mut r, 64);
        let cs: Vec<f64> = s.iter().map(|v| c * v).collect();
        let ce: Vec<f64> = e.iter().map(|v| c * v).collect();
        let a = metrics::snr(&s, &e).unwrap();
        let b = metrics::snr(&cs, &ce).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn si_sdr_ignores_estimate_scale(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let s = randn_vec(&mut r, 64);
        let e: Vec<f64> = s.iter().zip(randn_vec(&mut r, 64)).map(|(a, n)| a + 0.3 * n).collect();
        let ce: Vec<f64> = e.iter().map(|v| c * v).collect();
        let a = metrics::si_sdr(&s, &e).unwrap();
        let b = metrics::si_sdr(&s, &ce).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn min_sdr_is_bounded_by_both(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let s = randn_vec(&mut r, 32);
        let e = randn_vec(&mut r, 32);
        let m = metrics::min_sdr(&s, &e).unwrap();
        prop_assert!(m <= metrics::snr(&s, &e).unwrap());
        prop_assert!(m <= metrics::sd_sdr(&s, &e).unwrap());
        prop_assert!(m <= CAP_DB);
    }

    #[test]
    fn bss_parts_rebuild_the_estimate(seed in 0u64..10_000, k in 2usize..5, target in 0usize..4) {
        let target = target % k;
        let mut r = rng(seed);
        let srcs: Vec<Waveform> = (0..k).map(|_| Waveform::new(randn_vec(&mut r, 96), 8000)).collect();
        let est = randn_vec(&mut r, 96);
        let set = SourceSet::unlabeled(srcs).unwrap();
        let d = metrics::bss_decompose(&est, &set, target).unwrap();
        let rebuilt = add(&add(&d.target, &d.interference), &d.artifact);
        prop_assert!(max_abs_diff(&rebuilt, &est) < 1e-10);
        for s in set.sources() {
            prop_assert!(inner(&d.artifact, &s.samples).abs() < 1e-9 * energy(&s.samples).sqrt() * energy(&est).sqrt());
        }
    }
}
