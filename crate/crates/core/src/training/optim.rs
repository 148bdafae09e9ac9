use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Linear ramp from 0 to `base_lr` over the first
/// `ceil(warmup_fraction · total_steps)` steps, then constant.
pub fn lr_schedule(step: usize, total_steps: usize, base_lr: f64, warmup_fraction: f64) -> f64 {
    let warmup = (warmup_fraction * total_steps as f64).ceil() as usize;
    if warmup == 0 || step >= warmup {
        base_lr
    } else {
        base_lr * step as f64 / warmup as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

#[derive(Clone, Debug)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// AdamW with decoupled weight decay and per-parameter bias correction.
/// State is created lazily, so parameters that are frozen or receive no
/// gradient never enter it.
#[derive(Clone, Debug, Default)]
pub struct AdamW {
    pub config: AdamWConfig,
    state: HashMap<ParamId, Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            state: HashMap::new(),
        }
    }

    pub fn has_state(&self, id: ParamId) -> bool {
        self.state.contains_key(&id)
    }

    pub fn state_len(&self) -> usize {
        self.state.len()
    }

    /// Applies one update to every trainable parameter in `grads` whose
    /// learning rate `lr_of` returns.
    pub fn step<'a>(
        &mut self,
        store: &mut ParamStore,
        grads: impl IntoIterator<Item = (ParamId, &'a Tensor)>,
        lr_of: impl Fn(ParamId) -> Option<f64>,
    ) -> Result<()> {
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        for (id, g) in grads {
            if !store.is_trainable(id) {
                continue;
            }
            let Some(lr) = lr_of(id) else { continue };
            let n = store.value(id).numel();
            if g.shape() != store.value(id).shape() {
                return Err(Error::dim("adamw_step", store.value(id).shape(), g.shape()));
            }
            let st = self.state.entry(id).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            });
            st.t += 1;
            let c1 = 1.0 - beta1.powi(st.t);
            let c2 = 1.0 - beta2.powi(st.t);
            let p = store.value_mut(id).data_mut();
            for k in 0..n {
                let gk = g.data()[k];
                st.m[k] = beta1 * st.m[k] + (1.0 - beta1) * gk;
                st.v[k] = beta2 * st.v[k] + (1.0 - beta2) * gk * gk;
                let mhat = st.m[k] / c1;
                let vhat = st.v[k] / c2;
                p[k] -= lr * (mhat / (vhat.sqrt() + eps) + weight_decay * p[k]);
            }
        }
        Ok(())
    }
}
