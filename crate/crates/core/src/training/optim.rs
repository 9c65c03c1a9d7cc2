use serde::{Deserialize, Serialize};

use crate::autograd::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lookahead_k: usize,
    pub lookahead_alpha: f64,
    /// Uses bias-corrected Adam without rectification.
    pub plain_adam: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lookahead_k: 6,
            lookahead_alpha: 0.5,
            plain_adam: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                problems.push(format!("{name} {b} must lie in [0, 1)"));
            }
        }
        if self.lookahead_k == 0 {
            problems.push("lookahead_k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.lookahead_alpha) {
            problems.push(format!(
                "lookahead_alpha {} must lie in [0, 1]",
                self.lookahead_alpha
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// RAdam inner updates wrapped in Lookahead.
#[derive(Clone, Debug)]
pub struct Ranger {
    config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    slow: Vec<f64>,
    step: u64,
}

impl Ranger {
    /// Zero moments, step 0, slow weights equal to the current values.
    pub fn new(store: &ParamStore, config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        let n = store.num_scalars();
        Ok(Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            slow: store.flat_values(),
            step: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Length of the approximated simple moving average after `t` steps, and
    /// the variance rectification factor when the adaptive step is trusted.
    pub fn rectification(beta2: f64, t: u64) -> (f64, Option<f64>) {
        let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
        let b2t = beta2.powi(t as i32);
        let rho = rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t);
        if rho > 4.0 {
            let r = ((rho - 4.0) * (rho - 2.0) * rho_inf
                / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho))
                .sqrt();
            (rho, Some(r))
        } else {
            (rho, None)
        }
    }

    /// One update from the gradients held in `store`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if !store.grads_finite() {
            return Err(Error::Numerical(
                "non-finite gradient; training aborted".into(),
            ));
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step;
        let bias1 = 1.0 - c.beta1.powi(t as i32);
        let bias2 = 1.0 - c.beta2.powi(t as i32);
        let rect = if c.plain_adam {
            Some(1.0)
        } else {
            Self::rectification(c.beta2, t).1
        };
        let mut offset = 0;
        for id in store.ids().collect::<Vec<_>>() {
            let (values, grads) = store.value_and_grad_mut(id);
            for (i, (w, g)) in values.iter_mut().zip(grads.iter()).enumerate() {
                let k = offset + i;
                self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g;
                self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g;
                let m_hat = self.m[k] / bias1;
                *w -= match rect {
                    Some(r) => c.learning_rate * r * m_hat / ((self.v[k] / bias2).sqrt() + c.eps),
                    None => c.learning_rate * m_hat,
                };
            }
            offset += values.len();
        }
        if t % c.lookahead_k as u64 == 0 {
            let mut fast = store.flat_values();
            for (s, f) in self.slow.iter_mut().zip(fast.iter_mut()) {
                *s += c.lookahead_alpha * (*f - *s);
                *f = *s;
            }
            store.set_flat_values(&fast)?;
        }
        Ok(())
    }
}
