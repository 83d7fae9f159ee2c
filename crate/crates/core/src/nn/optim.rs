use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Gradients, ParameterStore, Real};
use crate::error::{contract_err, Result};

/// One-cycle learning-rate schedule: linear warmup over the first 10% of the
/// steps up to `peak`, then cosine decay to `peak / 100` at the final step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneCycle {
    pub total_steps: usize,
    pub warmup_fraction: f64,
    pub final_divisor: f64,
}

impl OneCycle {
    pub fn new(total_steps: usize) -> Self {
        Self {
            total_steps,
            warmup_fraction: 0.1,
            final_divisor: 100.0,
        }
    }

    fn warmup_steps(&self) -> usize {
        let w = libm::round(self.warmup_fraction * self.total_steps as f64) as usize;
        w.clamp(1, self.total_steps.max(1))
    }

    /// Multiplier in `(0, 1]` applied to each parameter group's peak rate.
    pub fn factor(&self, step: usize) -> f64 {
        let warm = self.warmup_steps();
        if step < warm {
            return (step + 1) as f64 / warm as f64;
        }
        let last = self.total_steps.saturating_sub(1);
        let floor = 1.0 / self.final_divisor;
        if last <= warm {
            return if step >= last { floor } else { 1.0 };
        }
        let t = ((step - warm) as f64 / (last - warm) as f64).min(1.0);
        floor + (1.0 - floor) * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t))
    }

    pub fn lr(&self, peak: f64, step: usize) -> f64 {
        peak * self.factor(step)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug, Default)]
pub struct AdamW {
    pub config: AdamWConfig,
    state: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            state: BTreeMap::new(),
        }
    }

    /// Applies one update. `grads` must cover exactly the trainable
    /// parameters; `lr_of` gives the learning rate for each parameter name.
    pub fn step<T: Real>(
        &mut self,
        params: &mut ParameterStore<T>,
        grads: &Gradients<T>,
        lr_of: &dyn Fn(&str) -> f64,
    ) -> Result<()> {
        for name in grads.keys() {
            match params.get(name) {
                Some(p) if p.trainable => {}
                Some(_) => return Err(contract_err!("gradient for frozen parameter `{}`", name)),
                None => return Err(contract_err!("gradient for unknown parameter `{}`", name)),
            }
        }
        let c = self.config;
        for p in params.iter_mut().filter(|p| p.trainable) {
            let g = grads
                .get(&p.name)
                .ok_or_else(|| contract_err!("missing gradient for `{}`", p.name))?;
            if g.shape() != p.tensor.shape() {
                return Err(contract_err!("gradient shape mismatch for `{}`", p.name));
            }
            let n = p.tensor.len();
            let st = self.state.entry(p.name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            });
            st.t += 1;
            let bc1 = 1.0 - libm::pow(c.beta1, st.t as f64);
            let bc2 = 1.0 - libm::pow(c.beta2, st.t as f64);
            let lr = lr_of(&p.name);
            for (i, (w, gv)) in p.tensor.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gv = gv.as_f64();
                st.m[i] = c.beta1 * st.m[i] + (1.0 - c.beta1) * gv;
                st.v[i] = c.beta2 * st.v[i] + (1.0 - c.beta2) * gv * gv;
                let mhat = st.m[i] / bc1;
                let vhat = st.v[i] / bc2;
                let mut x = w.as_f64();
                x -= lr * c.weight_decay * x;
                x -= lr * mhat / (libm::sqrt(vhat) + c.eps);
                *w = T::of(x);
            }
        }
        Ok(())
    }
}
