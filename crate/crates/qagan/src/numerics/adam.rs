//! Bias-corrected Adam over a parameter group.

use super::params::ParamGroup;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: Scalar,
    pub beta1: Scalar,
    pub beta2: Scalar,
    pub eps: Scalar,
}

impl AdamParams {
    pub fn with_lr(lr: Scalar) -> Self {
        AdamParams { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter first/second moment estimates plus the shared step count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub hp: AdamParams,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(hp: AdamParams, group: &ParamGroup) -> Result<Self> {
        if hp.lr < 0.0 {
            return Err(Error::contract("adam: lr must be nonnegative"));
        }
        Ok(AdamState {
            hp,
            m: group
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect(),
            v: group
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect(),
            t: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update: params[i] -= lr * m_hat / (sqrt(v_hat) + eps).
    pub fn step(&mut self, group: &mut ParamGroup, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.m.len() || group.len() != self.m.len() {
            return Err(Error::contract(format!(
                "adam: group/grad count mismatch ({} params, {} grads, {} slots)",
                group.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != self.m[i].shape() {
                return Err(Error::contract(format!(
                    "adam: gradient shape {:?} does not match parameter {:?}",
                    g.shape(),
                    self.m[i].shape()
                )));
            }
        }
        self.t += 1;
        let t = self.t as Scalar;
        let bc1 = 1.0 - self.hp.beta1.powf(t);
        let bc2 = 1.0 - self.hp.beta2.powf(t);
        for i in 0..grads.len() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = grads[i].data();
            let p = {
                // Split borrows: group params are disjoint from moments.
                let ph = super::params::handle_at(i);
                group.get_mut(ph).data_mut()
            };
            for j in 0..g.len() {
                m[j] = self.hp.beta1 * m[j] + (1.0 - self.hp.beta1) * g[j];
                v[j] = self.hp.beta2 * v[j] + (1.0 - self.hp.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= self.hp.lr * m_hat / (v_hat.sqrt() + self.hp.eps);
            }
        }
        Ok(())
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    pub fn restore(hp: AdamParams, m: Vec<Tensor>, v: Vec<Tensor>, t: u64) -> Self {
        AdamState { hp, m, v, t }
    }
}
