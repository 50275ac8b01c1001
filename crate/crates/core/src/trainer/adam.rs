use std::collections::BTreeMap;

use crate::error::{PceError, Result};
use crate::model::Param;
use crate::tensor::{Scalar, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(PceError::config(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(PceError::config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(PceError::config(format!(
                "eps {} must be positive",
                self.eps
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub m: Tensor4<T>,
    pub v: Tensor4<T>,
}

/// Bias-corrected Adam with moments keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: BTreeMap<String, Moments<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Applies one update to every parameter from its accumulated gradient.
    ///
    /// All gradients are checked first; a non-finite entry aborts the step
    /// with the parameter's name and leaves parameters and state untouched.
    pub fn step(&mut self, params: Vec<(String, &mut Param<T>)>) -> Result<()> {
        for (name, p) in &params {
            if p.grad.shape() != p.value.shape() {
                return Err(PceError::shape(format!(
                    "{name}: gradient {:?} for parameter {:?}",
                    p.grad.shape(),
                    p.value.shape()
                )));
            }
            if let Some(m) = self.moments.get(name) {
                if m.m.shape() != p.value.shape() {
                    return Err(PceError::shape(format!(
                        "{name}: moments {:?} for parameter {:?}",
                        m.m.shape(),
                        p.value.shape()
                    )));
                }
            }
            if let Some(i) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(PceError::Numeric(format!(
                    "non-finite gradient in {name} at element {i}; step aborted"
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = T::of(1.0 / (1.0 - beta1.powi(t)));
        let c2 = T::of(1.0 / (1.0 - beta2.powi(t)));
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let (lr, eps) = (T::of(lr), T::of(eps));
        for (name, p) in params {
            let mo = self.moments.entry(name).or_insert_with(|| Moments {
                m: Tensor4::zeros(p.value.shape()),
                v: Tensor4::zeros(p.value.shape()),
            });
            let values = p.value.data_mut();
            let grads = p.grad.data();
            let m = mo.m.data_mut();
            let v = mo.v.data_mut();
            for i in 0..values.len() {
                let g = grads[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                let m_hat = m[i] * c1;
                let v_hat = v[i] * c2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
