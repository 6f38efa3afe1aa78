mod common;

use common::structsuite::*;
use proptest::prelude::*;
use remixer::model::*;
use remixer::signal::GainVector;

#[test]
fn masks_partition_the_latent() {
    assert!(mask_partition() < 1e-6);
}

#[test]
fn unit_latent_gains_reproduce_separation() {
    assert!(latent_identity());
}

#[test]
fn decoder_is_linear() {
    assert!(decoder_linearity() < 1e-9);
}

#[test]
fn checkpoint_round_trips_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    assert!(checkpoint_round_trip(dir.path()));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let params = init_params(&small_config(2), 1).unwrap();
    let ck = Checkpoint::new(Variant::Baseline, Default::default(), vec!["a".into(), "b".into()], params);
    let text = String::from_utf8(ck.to_bytes().unwrap()).unwrap();
    assert!(Checkpoint::from_bytes(b"not json").is_err());
    let wrong_format = text.replacen("remixer-checkpoint", "something-else", 1);
    assert!(Checkpoint::from_bytes(wrong_format.as_bytes()).is_err());
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["tensors"].as_array_mut().unwrap().pop();
    assert!(Checkpoint::from_bytes(v.to_string().as_bytes()).is_err());
}

#[test]
fn same_seed_gives_same_weights() {
    let cfg = small_config(3);
    assert_eq!(init_params(&cfg, 4).unwrap(), init_params(&cfg, 4).unwrap());
    assert_ne!(init_params(&cfg, 4).unwrap(), init_params(&cfg, 5).unwrap());
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small_config(2);
    cfg.k = 1;
    assert!(init_params(&cfg, 0).is_err());
    let mut cfg = small_config(2);
    cfg.block_kernel = 4;
    assert!(init_params(&cfg, 0).is_err());
    let mut cfg = small_config(2);
    cfg.stride = 16;
    assert!(init_params(&cfg, 0).is_err());
}

#[test]
fn wrong_sample_rate_is_rejected() {
    let params = init_params(&small_config(2), 1).unwrap();
    let x = remixer::signal::Waveform::new(vec![0.1; 100], 16000);
    assert!(forward_separate(&params, &x).is_err());
}

#[test]
fn remix_gain_count_must_match() {
    let params = init_params(&small_config(2), 1).unwrap();
    let out = forward_separate(&params, &input(1, 100)).unwrap();
    assert!(remix_from_estimates(&out, &GainVector::unity(3)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimates_keep_the_input_length(len in 1usize..700, k in 2usize..6) {
        let params = init_params(&small_config(k), 3).unwrap();
        if len < params.config.kernel_len {
            prop_assert!(forward_separate(&params, &input(len as u64, len)).is_err());
            return Ok(());
        }
        let out = forward_separate(&params, &input(len as u64, len)).unwrap();
        prop_assert_eq!(out.estimates.len(), k);
        for e in &out.estimates {
            prop_assert_eq!(e.len(), len);
        }
        let cfg = &params.config;
        prop_assert_eq!(out.latent.shape(), &[cfg.n_filters, cfg.frames(len)][..]);
        prop_assert_eq!(out.masks.shape(), &[k, cfg.n_filters, cfg.frames(len)][..]);
        prop_assert!(mask_partition_error(&out.masks) < 1e-6);
    }
}
