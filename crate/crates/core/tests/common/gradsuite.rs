//! Finite-difference checks of every graph operator, the full forward pass
//! and the three training losses.

use remixer::diff::gradcheck::{check_gradients, check_gradients_sampled, DEFAULT_STEP};
use remixer::diff::{Graph, NodeId, Tensor};
use remixer::model::{build_forward, init_params, BoundParams, ModelConfig, ModelParams};
use remixer::signal::{GainVector, SourceSet, Waveform};
use remixer::training::{loss_baseline, loss_model1, loss_model2, LossWeights};
use remixer::Result;

use super::{rand_tensor, randn_vec, rng};

/// Reduces any node to a scalar with fixed random weights so every output
/// coordinate reaches the gradient.
fn probe(g: &mut Graph, node: NodeId, seed: u64) -> Result<NodeId> {
    let shape = g.value(node).shape().to_vec();
    let w = rand_tensor(&mut rng(seed), &shape);
    let w = g.constant(w);
    let p = g.hadamard(node, w)?;
    Ok(g.sum(p))
}

pub fn tiny_config(k: usize) -> ModelConfig {
    ModelConfig {
        k,
        n_filters: 6,
        kernel_len: 4,
        stride: 2,
        bottleneck: 4,
        hidden: 5,
        block_kernel: 3,
        blocks: 2,
        repeats: 2,
        sample_rate: 8000,
    }
}

fn rebind(params: &ModelParams, ids: &[NodeId]) -> BoundParams {
    let mut it = ids.iter();
    params.tensors.map(|_, _| *it.next().expect("one id per tensor"))
}

fn sources(k: usize, len: usize, seed: u64) -> SourceSet {
    let mut r = rng(seed);
    SourceSet::unlabeled((0..k).map(|_| Waveform::new(randn_vec(&mut r, len), 8000)).collect()).unwrap()
}

pub struct Case {
    pub name: &'static str,
    pub rel_error: f64,
}

fn op_case<F>(name: &'static str, inputs: Vec<Tensor>, f: F) -> Case
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let report = check_gradients(&inputs, DEFAULT_STEP, |g, ids| {
        let out = f(g, ids)?;
        probe(g, out, 99)
    })
    .unwrap_or_else(|e| panic!("{name}: {e}"));
    Case {
        name,
        rel_error: report.max_rel_error(),
    }
}

/// Avoids inputs within a small margin of a kink.
fn away_from_zero(mut t: Tensor) -> Tensor {
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1_f64.copysign(*v);
        }
    }
    t
}

pub fn run() -> Vec<Case> {
    let mut r = rng(2024);
    let mut cases = vec![
        op_case("conv1d", vec![rand_tensor(&mut r, &[3, 17]), rand_tensor(&mut r, &[4, 3, 4])], |g, i| {
            g.conv1d(i[0], i[1], 2)
        }),
        op_case("conv1d_pointwise", vec![rand_tensor(&mut r, &[3, 9]), rand_tensor(&mut r, &[5, 3, 1])], |g, i| {
            g.conv1d(i[0], i[1], 1)
        }),
        op_case(
            "conv1d_transpose",
            vec![rand_tensor(&mut r, &[3, 7]), rand_tensor(&mut r, &[3, 2, 4])],
            |g, i| g.conv1d_transpose(i[0], i[1], 2),
        ),
        op_case(
            "depthwise_conv1d",
            vec![rand_tensor(&mut r, &[3, 12]), rand_tensor(&mut r, &[3, 3])],
            |g, i| g.depthwise_conv1d(i[0], i[1], 2),
        ),
        op_case("channel_bias", vec![rand_tensor(&mut r, &[3, 5]), rand_tensor(&mut r, &[3])], |g, i| {
            g.channel_bias(i[0], i[1])
        }),
        op_case("relu", vec![away_from_zero(rand_tensor(&mut r, &[4, 6]))], |g, i| Ok(g.relu(i[0]))),
        op_case(
            "prelu",
            vec![away_from_zero(rand_tensor(&mut r, &[4, 6])), Tensor::scalar(0.25)],
            |g, i| g.prelu(i[0], i[1]),
        ),
        op_case(
            "global_layer_norm",
            vec![rand_tensor(&mut r, &[3, 8]), rand_tensor(&mut r, &[3]), rand_tensor(&mut r, &[3])],
            |g, i| g.global_layer_norm(i[0], i[1], i[2]),
        ),
        op_case("softmax_over_sources", vec![rand_tensor(&mut r, &[3, 2, 5])], |g, i| {
            g.softmax_over_sources(i[0])
        }),
        op_case("select", vec![rand_tensor(&mut r, &[3, 2, 4])], |g, i| g.select(i[0], 1)),
        op_case("hadamard", vec![rand_tensor(&mut r, &[2, 5]), rand_tensor(&mut r, &[2, 5])], |g, i| {
            g.hadamard(i[0], i[1])
        }),
        op_case("scale", vec![rand_tensor(&mut r, &[2, 5])], |g, i| Ok(g.scale(i[0], -1.7))),
        op_case("add", vec![rand_tensor(&mut r, &[2, 5]), rand_tensor(&mut r, &[2, 5])], |g, i| {
            g.add(i[0], i[1])
        }),
        op_case(
            "weighted_sum",
            vec![rand_tensor(&mut r, &[7]), rand_tensor(&mut r, &[7]), rand_tensor(&mut r, &[7])],
            |g, i| g.weighted_sum(i, &[1.0, 0.3, -2.0]),
        ),
        op_case("crop", vec![rand_tensor(&mut r, &[2, 9])], |g, i| g.crop(i[0], 6)),
        op_case("reshape", vec![rand_tensor(&mut r, &[2, 6])], |g, i| g.reshape(i[0], vec![3, 4])),
    ];

    let reference = randn_vec(&mut r, 20);
    let est = Tensor::row(randn_vec(&mut r, 20));
    let report = check_gradients(&[est], DEFAULT_STEP, |g, i| g.neg_snr_loss(&reference, i[0])).unwrap();
    cases.push(Case {
        name: "neg_snr_loss",
        rel_error: report.max_rel_error(),
    });

    let cfg = tiny_config(3);
    let params = init_params(&cfg, 7).unwrap();
    let inputs: Vec<Tensor> = params.tensors.leaves().into_iter().cloned().collect();
    let x = randn_vec(&mut r, 23);
    let gains = GainVector::from_db(vec![4.0, -7.0, 1.5]).unwrap();
    for (name, latent) in [("forward", None), ("forward_latent_gains", Some(&gains))] {
        let report = check_gradients_sampled(&inputs, DEFAULT_STEP, 8, 3, |g, ids| {
            let bound = rebind(&params, ids);
            let fwd = build_forward(g, &params, &bound, &x, latent)?;
            let all = g.weighted_sum(&fwd.estimates, &[1.0, -0.5, 2.0])?;
            probe(g, all, 5)
        })
        .unwrap();
        cases.push(Case {
            name,
            rel_error: report.max_rel_error(),
        });
    }

    let batch = vec![sources(3, 23, 11), sources(3, 23, 12)];
    let gv = vec![
        GainVector::from_db(vec![6.0, -3.0, 0.5]).unwrap(),
        GainVector::from_db(vec![-9.0, 2.0, 11.0]).unwrap(),
    ];
    let w = LossWeights::new(1.0, 0.5).unwrap();
    let losses: [(&'static str, u8); 3] = [("loss_baseline", 0), ("loss_model1", 1), ("loss_model2", 2)];
    for (name, which) in losses {
        let report = check_gradients_sampled(&inputs, DEFAULT_STEP, 8, 4, |g, ids| {
            let bound = rebind(&params, ids);
            match which {
                0 => loss_baseline(g, &params, &bound, &batch),
                1 => loss_model1(g, &params, &bound, &batch, &gv, w),
                _ => loss_model2(g, &params, &bound, &batch, &gv, w),
            }
        })
        .unwrap();
        cases.push(Case {
            name,
            rel_error: report.max_rel_error(),
        });
    }
    cases
}
