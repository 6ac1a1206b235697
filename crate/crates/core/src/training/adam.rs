use crate::error::{Error, Result};
use crate::model::UniversalModel;
use crate::numcore::Real;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_update<F: Real>(param: &mut [F], grad: &[F], m: &mut [F], v: &mut [F], t: u64, lr: f64) {
    let b1 = F::from_f64_lossy(BETA1);
    let b2 = F::from_f64_lossy(BETA2);
    let one = F::one();
    let c1 = F::from_f64_lossy(1.0 - BETA1.powi(t as i32));
    let c2 = F::from_f64_lossy(1.0 - BETA2.powi(t as i32));
    let lr = F::from_f64_lossy(lr);
    let eps = F::from_f64_lossy(EPSILON);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] = param[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Moment buffers for every model parameter, in canonical order.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(model: &UniversalModel<F>) -> Self {
        let sizes: Vec<usize> = model.params().iter().map(|(_, p)| p.numel()).collect();
        Self {
            m: sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. Parameters without a gradient (languages not in
    /// the batch) are left untouched, moments included.
    pub fn step(&mut self, model: &mut UniversalModel<F>, grads: &[Option<Vec<F>>], lr: f64) -> Result<()> {
        let mut params = model.params_mut();
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::contract(format!(
                "optimizer tracks {} parameters, model has {}, gradients {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        for (i, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            adam_update(p.data_mut(), g, &mut self.m[i], &mut self.v[i], self.t, lr);
        }
        Ok(())
    }
}
