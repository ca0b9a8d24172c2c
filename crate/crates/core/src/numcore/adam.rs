use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Adam hyperparameters. Defaults: lr 1e-4, beta1 0.9, beta2 0.999, eps 1e-8.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment buffers and the step counter.
#[derive(Clone, Debug)]
pub struct AdamState<F: Scalar = f32> {
    pub config: AdamConfig,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
    t: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(config: AdamConfig, params: &ParamStore<F>) -> Self {
        let shapes = params.shapes();
        AdamState {
            config,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, i: usize) -> &Tensor<F> {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor<F> {
        &self.v[i]
    }
}

/// One bias-corrected Adam update of every parameter in `params`.
///
/// `grads` is indexed like the store.
pub fn adam_step<F: Scalar>(
    params: &mut ParamStore<F>,
    grads: &[Tensor<F>],
    state: &mut AdamState<F>,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::dim(
            "adam_step",
            &[params.len()],
            &[grads.len(), state.m.len()],
        ));
    }
    for (id, g) in params.ids().zip(grads) {
        if g.shape() != params.get(id).shape() || state.m[id.index()].shape() != g.shape() {
            return Err(Error::dim("adam_step", params.get(id).shape(), g.shape()));
        }
    }

    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let b1 = F::from_f64(c.beta1);
    let b2 = F::from_f64(c.beta2);
    let one_b1 = F::from_f64(1.0 - c.beta1);
    let one_b2 = F::from_f64(1.0 - c.beta2);
    let corr1 = F::from_f64(1.0 - c.beta1.powi(t));
    let corr2 = F::from_f64(1.0 - c.beta2.powi(t));
    let lr = F::from_f64(c.lr);
    let eps = F::from_f64(c.epsilon);

    for (id, g) in params.ids().zip(grads) {
        let i = id.index();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.get_mut(id).data_mut();
        for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
