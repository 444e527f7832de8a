//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::tensor::Element;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Adam { lr, ..Adam::default() }
    }

    /// Applies one update to every parameter. Gradients are checked for
    /// finiteness before anything is modified.
    pub fn step<'a, T, I>(&self, params: I) -> Result<()>
    where
        T: Element,
        I: IntoIterator<Item = &'a mut Parameter<T>>,
    {
        if !(self.lr > 0.0) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        let mut params: Vec<&mut Parameter<T>> = params.into_iter().collect();
        for p in &params {
            if let Some((i, g)) = p.grad.data().iter().enumerate().find(|(_, g)| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient {g} in parameter `{}` at flat index {i}",
                    p.name
                )));
            }
        }
        for p in params.iter_mut() {
            p.step_count += 1;
            let t = p.step_count as i32;
            let b1 = T::from_f64_lossy(self.beta1);
            let b2 = T::from_f64_lossy(self.beta2);
            let one = T::one();
            let c1 = T::from_f64_lossy(1.0 - self.beta1.powi(t));
            let c2 = T::from_f64_lossy(1.0 - self.beta2.powi(t));
            let lr = T::from_f64_lossy(self.lr);
            let eps = T::from_f64_lossy(self.eps);
            let Parameter { value, grad, m, v, .. } = &mut **p;
            for (((w, &g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
