use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::params::{ParamGroup, ParamId, ParamStore};
use super::tape::Matrix;
use crate::error::{Error, Result};

/// Learning-rate settings for one parameter group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub lr: f64,
    pub weight_decay: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub task: GroupConfig,
    pub encoder: GroupConfig,
    /// Steps over which both rates decay linearly to zero.
    pub total_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            task: GroupConfig {
                lr: 3e-4,
                weight_decay: 0.0,
            },
            encoder: GroupConfig {
                lr: 1e-5,
                weight_decay: 1e-2,
            },
            total_steps: 1,
        }
    }
}

impl AdamConfig {
    pub fn group(&self, group: ParamGroup) -> GroupConfig {
        match group {
            ParamGroup::Task => self.task,
            ParamGroup::Encoder => self.encoder,
        }
    }

    /// Linearly decayed rate before update number `step` (0-based).
    pub fn lr_at(&self, group: ParamGroup, step: u64) -> f64 {
        let remaining = self.total_steps.saturating_sub(step) as f64;
        self.group(group).lr * remaining / self.total_steps.max(1) as f64
    }
}

/// Adaptive moment estimation with decoupled weight decay.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Adam {
    pub(crate) step: u64,
    pub(crate) first: Vec<Matrix>,
    pub(crate) second: Vec<Matrix>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            step: 0,
            first: store.iter().map(|(_, p)| Matrix::zeros(p.value.raw_dim())).collect(),
            second: store.iter().map(|(_, p)| Matrix::zeros(p.value.raw_dim())).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters without a gradient are left untouched,
    /// moments included, as in the common framework implementations.
    pub fn step(&mut self, store: &mut ParamStore, grads: &HashMap<ParamId, Matrix>, config: &AdamConfig) -> Result<()> {
        for (id, g) in grads {
            if !g.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}", store.get(*id).name)));
            }
        }
        let t = self.step + 1;
        let c1 = 1.0 - config.beta1.powi(t as i32);
        let c2 = 1.0 - config.beta2.powi(t as i32);
        let (b1, b2, eps) = (config.beta1, config.beta2, config.eps);
        for (&id, g) in grads {
            let group = store.get(id).group;
            let lr = config.lr_at(group, self.step);
            let decay = config.group(group).weight_decay;
            let i = id.index();
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            ndarray::Zip::from(store.value_mut(id))
                .and(&mut *m)
                .and(&mut *v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let update = (*m / c1) / ((*v / c2).sqrt() + eps);
                    *p -= lr * (update + decay * *p);
                });
        }
        self.step = t;
        Ok(())
    }
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut HashMap<ParamId, Matrix>, max_norm: f64) -> f64 {
    // Summed in id order: map order varies between processes and would
    // change the rounding.
    let mut ids: Vec<ParamId> = grads.keys().copied().collect();
    ids.sort_unstable();
    let norm = ids.iter().map(|id| grads[id].iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            g.mapv_inplace(|x| x * scale);
        }
    }
    norm
}
