//! Adam optimizer with bias correction over named parameter sets.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Optimizer hyperparameters and per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
    /// Completed update count; increases by exactly one per [`AdamState::step`].
    pub step_count: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            learning_rate,
            epsilon: 1e-8,
            step_count: 0,
            moments: BTreeMap::new(),
        }
    }

    /// One bias-corrected Adam update applied to `params` in place.
    ///
    /// `grads` must contain a gradient for every parameter, with matching
    /// shape; moment buffers are allocated lazily on first sight of a name.
    pub fn step(
        &mut self,
        params: &mut BTreeMap<String, Tensor>,
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count;
        let bc1 = 1.0 - math::powi(self.beta1, t as i32);
        let bc2 = 1.0 - math::powi(self.beta2, t as i32);

        for (name, p) in params.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::contract(format!("missing gradient for parameter {name:?}")))?;
            if g.shape() != p.shape() {
                return Err(Error::dimension(
                    format!("gradient for parameter {name:?}"),
                    p.shape(),
                    g.shape(),
                ));
            }
            let gv = g.to_f64_vec();
            let n = gv.len();
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let mut pv = p.to_f64_vec();
            for j in 0..n {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gv[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gv[j] * gv[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                pv[j] -= self.learning_rate * m_hat / (math::sqrt(v_hat) + self.epsilon);
            }
            *p = Tensor::from_f64(p.shape(), pv)?;
        }
        Ok(())
    }
}
