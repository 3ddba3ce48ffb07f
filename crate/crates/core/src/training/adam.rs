use crate::autodiff::ParamStore;
use crate::tensor::ComplexTensor;

use super::{TrainError, TrainingConfig};

/// Adam with bias correction. Real and imaginary parts are separate
/// coordinates with their own moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Number of updates applied so far.
    pub step: u64,
    pub m: Vec<ComplexTensor>,
    pub v: Vec<ComplexTensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: &TrainingConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| ComplexTensor::zeros(p.value.shape()))
                .collect::<Vec<_>>()
        };
        Self {
            learning_rate: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            epsilon: cfg.adam_epsilon,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Applies one update from the gradients held in `store`. Frozen
    /// parameters are skipped entirely.
    pub fn update(&mut self, store: &mut ParamStore) -> Result<(), TrainError> {
        if let Some(p) = store.iter().find(|p| p.trainable && !p.grad.is_finite()) {
            return Err(TrainError::NonFiniteGradient(p.name.clone()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in store.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let (pr, pi) = p.value.parts_mut();
            let (mr, mi) = m.parts_mut();
            let (vr, vi) = v.parts_mut();
            let coords = [
                (pr, p.grad.re(), mr, vr),
                (pi, p.grad.im(), mi, vi),
            ];
            for (value, grad, m, v) in coords {
                for k in 0..value.len() {
                    let g = grad[k];
                    m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                    v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                    let mhat = m[k] / c1;
                    let vhat = v[k] / c2;
                    value[k] -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
                }
            }
        }
        Ok(())
    }
}
