//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Perturbation used by the gradient suites.
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Norm-wise relative error `||analytic - numeric|| / max(||analytic||, ||numeric||)` per input.
    pub rel_error: Vec<f64>,
    /// Coordinates compared per input.
    pub checked: Vec<usize>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_error.iter().fold(0.0, |m, &e| m.max(e))
    }
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let root = f(&mut g, &ids)?;
    Ok(g.scalar_value(root))
}

fn rel_error(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Compares every coordinate of every input.
pub fn check_gradients<F>(inputs: &[Tensor], step: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    check_gradients_sampled(inputs, step, usize::MAX, 0, f)
}

/// Compares at most `per_input` randomly chosen coordinates of each input.
pub fn check_gradients_sampled<F>(
    inputs: &[Tensor],
    step: f64,
    per_input: usize,
    seed: u64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let root = f(&mut g, &ids)?;
    let grads = g.backward(root)?;
    if !g.is_finite() || !grads.is_finite() {
        return Err(Error::Numerical("non-finite value in gradient check graph".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rel = Vec::with_capacity(inputs.len());
    let mut checked = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for (i, id) in ids.iter().enumerate() {
        let n = inputs[i].numel();
        let coords: Vec<usize> = if per_input >= n {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, per_input).into_vec();
            c.sort_unstable();
            c
        };
        let zero = Tensor::zeros(inputs[i].shape());
        let analytic_full = grads.get(*id).unwrap_or(&zero).data();
        let mut analytic = Vec::with_capacity(coords.len());
        let mut numeric = Vec::with_capacity(coords.len());
        for &j in &coords {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let plus = evaluate(&work, &f)?;
            work[i].data_mut()[j] = orig - step;
            let minus = evaluate(&work, &f)?;
            work[i].data_mut()[j] = orig;
            numeric.push((plus - minus) / (2.0 * step));
            analytic.push(analytic_full[j]);
        }
        rel.push(rel_error(&analytic, &numeric));
        checked.push(coords.len());
    }
    Ok(GradCheckReport {
        rel_error: rel,
        checked,
    })
}
