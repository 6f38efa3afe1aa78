use crate::diff::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

/// Adam moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let zeros: Vec<Tensor> = params.into_iter().map(|t| Tensor::zeros(t.shape())).collect();
        OptimizerState {
            second_moment: zeros.clone(),
            first_moment: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts the step
/// before anything is modified.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut OptimizerState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::invalid(format!(
            "{} parameters, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first_moment[i].shape() {
            return Err(Error::invalid(format!(
                "parameter {i} has shape {:?} but gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if let Some(j) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient {} at parameter {i}, element {j}",
                g.data()[j]
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
