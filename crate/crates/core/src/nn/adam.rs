use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ModelParams, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers over the trainable tensors, plus the
/// number of steps taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_params(params: &ModelParams<T>) -> Self {
        let zeros: Vec<Vec<T>> = params
            .trainable()
            .iter()
            .map(|t| vec![T::zero(); t.len()])
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn matches(&self, params: &ModelParams<T>) -> bool {
        let shapes: Vec<usize> = params.trainable().iter().map(|t| t.len()).collect();
        let m: Vec<usize> = self.m.iter().map(Vec::len).collect();
        let v: Vec<usize> = self.v.iter().map(Vec::len).collect();
        shapes == m && shapes == v
    }
}

impl Adam {
    /// One bias-corrected Adam update. Fails without touching `params` if any
    /// gradient is non-finite.
    pub fn step<T: Scalar>(
        &self,
        params: &mut ModelParams<T>,
        grads: &ModelParams<T>,
        state: &mut AdamState<T>,
    ) -> Result<()> {
        if !state.matches(params) || params.arch != grads.arch {
            return Err(Error::dim("optimizer state or gradients do not match parameters"));
        }
        for (i, g) in grads.trainable().iter().enumerate() {
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in tensor {i} at index {pos}"
                )));
            }
        }
        state.step += 1;
        let t = state.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::one() - T::of(self.beta1.powi(t));
        let c2 = T::one() - T::of(self.beta2.powi(t));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        for (((p, g), m), v) in params
            .trainable_mut()
            .into_iter()
            .zip(grads.trainable())
            .zip(state.m.iter_mut())
            .zip(state.v.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
