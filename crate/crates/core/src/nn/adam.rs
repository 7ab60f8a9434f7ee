//! Adam with bias correction.
//!
//! ```text
//! m = b1 m + (1 - b1) g
//! v = b2 v + (1 - b2) g^2
//! p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
//! ```

use serde::{Deserialize, Serialize};

use super::params::{ParamStore, TrainableSet};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Option<Vec<f64>>>,
    second: Vec<Option<Vec<f64>>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        AdamState {
            config,
            first: vec![None; store.len()],
            second: vec![None; store.len()],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First and second moment buffers of parameter `index`, once it has
    /// been updated at least once.
    pub fn moments(&self, index: usize) -> Option<(&[f64], &[f64])> {
        match (&self.first[index], &self.second[index]) {
            (Some(m), Some(v)) => Some((m, v)),
            _ => None,
        }
    }

    /// Applies one update to every parameter whose partition is in
    /// `trainable`. `grads` is indexed like the store.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &[Option<Tensor>],
        trainable: TrainableSet,
    ) -> Result<()> {
        if grads.len() != store.len() || self.first.len() != store.len() {
            return Err(Error::invalid(format!(
                "adam: {} gradients / {} moment slots for {} parameters",
                grads.len(),
                self.first.len(),
                store.len()
            )));
        }
        // validate before touching anything
        for (i, (_, p)) in store.iter().enumerate() {
            if !trainable.contains(p.partition) {
                continue;
            }
            match &grads[i] {
                None => {
                    return Err(Error::invalid(format!(
                        "adam: missing gradient for trainable parameter {}",
                        p.name
                    )))
                }
                Some(g) if g.shape() != p.value.shape() => {
                    return Err(Error::Shape {
                        op: "adam",
                        lhs: p.value.shape().to_vec(),
                        rhs: g.shape().to_vec(),
                    })
                }
                Some(_) => {}
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (i, p) in store.iter_mut().enumerate() {
            if !trainable.contains(p.partition) {
                continue;
            }
            let g = grads[i].as_ref().expect("validated above").data();
            let n = g.len();
            let m = self.first[i].get_or_insert_with(|| vec![0.0; n]);
            let v = self.second[i].get_or_insert_with(|| vec![0.0; n]);
            for (((w, &gj), mj), vj) in p.value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mj = b1 * *mj + (1.0 - b1) * gj;
                *vj = b2 * *vj + (1.0 - b2) * gj * gj;
                let m_hat = *mj / c1;
                let v_hat = *vj / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
