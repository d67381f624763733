//! Adam with bias correction.

use crate::{Float, Gradients, NnError, ParamStore, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T: Float> {
    config: AdamConfig,
    step: u64,
    /// First and second moments, indexed by parameter position.
    moments: Vec<Option<(Vec<T>, Vec<T>)>>,
}

impl<T: Float> Adam<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        if !(config.lr > 0.0 && config.lr.is_finite()) {
            return Err(NnError::invalid("adam", format!("learning rate must be positive, got {}", config.lr)));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) || config.eps <= 0.0 {
            return Err(NnError::invalid("adam", "betas must lie in [0, 1) and eps must be positive"));
        }
        Ok(Adam { config, step: 0, moments: Vec::new() })
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates every trainable parameter. Parameters without a gradient are
    /// treated as having a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        for (_, g) in grads.params() {
            g.check_finite("adam gradient")?;
        }
        self.step += 1;
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let corr1 = T::lit(1.0 - c.beta1.powi(t));
        let corr2 = T::lit(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        for id in store.trainable_ids() {
            let n = store.value(id).numel();
            let (m, v) = self.moments[id.index()].get_or_insert_with(|| (vec![T::zero(); n], vec![T::zero(); n]));
            let grad = grads.param(id).map(|g| g.data());
            let p = store.value_mut(id).data_mut();
            for i in 0..n {
                let g = grad.map_or(T::zero(), |g| g[i]);
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
