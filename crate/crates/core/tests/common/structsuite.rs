//! Structural properties of the network that hold for any weights.

use remixer::model::*;
use remixer::signal::{GainVector, Waveform};
use remixer::training::LossWeights;

use super::*;

pub fn input(seed: u64, len: usize) -> Waveform {
    Waveform::new(randn_vec(&mut rng(seed), len), 8000)
}

pub fn small_config(k: usize) -> ModelConfig {
    ModelConfig {
        k,
        n_filters: 16,
        kernel_len: 8,
        stride: 4,
        bottleneck: 8,
        hidden: 16,
        block_kernel: 3,
        blocks: 3,
        repeats: 1,
        sample_rate: 8000,
    }
}

/// Worst mask-sum deviation over a few inputs and models.
pub fn mask_partition() -> f64 {
    let mut worst: f64 = 0.0;
    for (seed, k) in [(1, 2), (2, 3), (3, 4), (4, 5)] {
        let params = init_params(&small_config(k), seed).unwrap();
        let out = forward_separate(&params, &input(seed, 997)).unwrap();
        assert_eq!(out.masks.shape()[0], k);
        for v in out.masks.data() {
            assert!((0.0..=1.0).contains(v));
        }
        worst = worst.max(mask_partition_error(&out.masks));
    }
    worst
}

fn bits(w: &[Waveform]) -> Vec<Vec<u64>> {
    w.iter().map(|x| x.samples.iter().map(|v| v.to_bits()).collect()).collect()
}

/// Latent gains of one reproduce plain separation exactly, and the latent
/// remix at unity equals the sum of the separated estimates.
pub fn latent_identity() -> bool {
    let params = init_params(&small_config(3), 11).unwrap();
    let x = input(12, 800);
    let plain = forward_separate(&params, &x).unwrap();
    let latent = forward_remix_latent(&params, &x, &GainVector::unity(3)).unwrap();
    let cached = decode_cached(&params, &plain, Some(&GainVector::unity(3))).unwrap();
    let baseline_remix = remix_from_estimates(&plain, &GainVector::unity(3)).unwrap();
    let mut summed = vec![0.0; x.len()];
    for e in &cached {
        for (o, v) in summed.iter_mut().zip(&e.samples) {
            *o += v;
        }
    }
    bits(&plain.estimates) == bits(&latent.estimates)
        && bits(&plain.estimates) == bits(&cached)
        && bits(&[baseline_remix]) == bits(&[Waveform::new(summed, 8000)])
}

/// Largest relative violation of decoder linearity in the masked latent.
pub fn decoder_linearity() -> f64 {
    let params = init_params(&small_config(2), 21).unwrap();
    let u = forward_separate(&params, &input(22, 640)).unwrap();
    let v = forward_separate(&params, &input(23, 640)).unwrap();
    let (a, b) = (0.7, -1.9);
    let mut combo = u.clone();
    for (c, (x, y)) in combo.latent.data_mut().iter_mut().zip(u.latent.data().iter().zip(v.latent.data())) {
        *c = a * x + b * y;
    }
    // shared masks keep the masked latent linear in the encoder output
    let mut v_shared = v.clone();
    v_shared.masks = u.masks.clone();
    let du = decode_cached(&params, &u, None).unwrap();
    let dv = decode_cached(&params, &v_shared, None).unwrap();
    let dc = decode_cached(&params, &combo, None).unwrap();
    let gains = GainVector::from_db(vec![7.5, -13.0]).unwrap();
    let dg = decode_cached(&params, &u, Some(&gains)).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..2 {
        let expect: Vec<f64> = du[k].samples.iter().zip(&dv[k].samples).map(|(x, y)| a * x + b * y).collect();
        let scale = expect.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(max_abs_diff(&dc[k].samples, &expect) / scale);
        let scaled: Vec<f64> = du[k].samples.iter().map(|x| gains.linear()[k] * x).collect();
        let scale = scaled.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(max_abs_diff(&dg[k].samples, &scaled) / scale);
    }
    worst
}

/// Save, load and save again; true when bytes, tensors and outputs all match.
pub fn checkpoint_round_trip(dir: &std::path::Path) -> bool {
    let params = init_params(&small_config(4), 31).unwrap();
    let labels = vec!["a".into(), "b".into(), "c".into(), "d".into()];
    let mut ck = Checkpoint::new(Variant::Model2, LossWeights::new(1.0, 0.25).unwrap(), labels, params);
    ck.metadata.seed = 31;
    let path = dir.join("ck.json");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    let tensors_equal = ck
        .params
        .tensors
        .leaves()
        .iter()
        .zip(back.params.tensors.leaves())
        .all(|(a, b)| a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let x = input(32, 500);
    let o1 = forward_separate(&ck.params, &x).unwrap();
    let o2 = forward_separate(&back.params, &x).unwrap();
    tensors_equal
        && back == ck
        && back.to_bytes().unwrap() == std::fs::read(&path).unwrap()
        && bits(&o1.estimates) == bits(&o2.estimates)
}
