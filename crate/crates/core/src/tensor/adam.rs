use serde::{Deserialize, Serialize};

use super::{Gradients, Matrix, ParamStore};
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
}

impl Adam {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        let zeros: Vec<Matrix> = store
            .values()
            .iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if store.len() != self.first_moment.len() || grads.as_slice().len() != store.len() {
            return Err(Error::contract(format!(
                "adam state holds {} matrices, store {} and gradients {}",
                self.first_moment.len(),
                store.len(),
                grads.as_slice().len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((param, grad), m), v) in store
            .values_mut()
            .iter_mut()
            .zip(grads.as_slice())
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            if param.shape() != grad.shape() || param.shape() != m.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    left: param.shape(),
                    right: grad.shape(),
                });
            }
            for (((p, &g), mi), vi) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let m_hat = *mi / correction1;
                let v_hat = *vi / correction2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
