use mmdm_tensor::Tensor;

use super::config::TrainParams;
use crate::network::ParamStore;

/// Adam with decoupled weight decay. Decay applies to matrices only.
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(store: &ParamStore, p: &TrainParams) -> Self {
        let zeros: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            lr: p.lr,
            beta1: p.beta1,
            beta2: p.beta2,
            eps: p.eps,
            weight_decay: p.weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &[Tensor]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, (t, g)) in store.tensors_mut().iter_mut().zip(grads).enumerate() {
            let decay = if t.rank() >= 2 { self.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, (w, &gk)) in t.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let step = (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
                *w -= self.lr * (step + decay * *w);
            }
        }
    }
}

/// Rate for `step` of `total` (1-based).
pub fn scheduled_lr(p: &TrainParams, step: usize, total: usize) -> f64 {
    match p.lr_final {
        None => p.lr,
        Some(end) => {
            let f = if total > 1 { (step - 1) as f64 / (total - 1) as f64 } else { 1.0 };
            end + 0.5 * (p.lr - end) * (1.0 + (std::f64::consts::PI * f).cos())
        }
    }
}
