use std::time::Instant;
use remixer::data::synth::{synth_source, FAMILY_ORDER};
use remixer::model::{init_params, ModelConfig, Variant};
use remixer::signal::{sample_training_gains, SourceSet};
use remixer::training::{LossWeights, Trainer};

fn main() {
    let k = 2;
    let secs: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let cfg = ModelConfig::with_k(k);
    let params = init_params(&cfg, 1).unwrap();
    let srcs: Vec<_> = (0..k).map(|i| synth_source(&FAMILY_ORDER[i].default_spec(), secs, 8000, i as u64).unwrap()).collect();
    let set = SourceSet::unlabeled(srcs).unwrap();
    let mut tr = Trainer::new(params, Variant::Model1, LossWeights::default(), 1e-3);
    for i in 0..5 {
        let t = Instant::now();
        let l = tr.step(std::slice::from_ref(&set), &[sample_training_gains(k, i)]).unwrap();
        println!("step {i}: loss {l:.3} in {:?}", t.elapsed());
    }
}
