//! AdamW with decoupled weight decay, and a warmup + cosine learning-rate schedule.

use crate::params::{ParamGrads, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamW {
    pub fn new(store: &ParamStore, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = store
            .ids()
            .map(|id| Tensor::zeros(store.get(id).shape()))
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. Weight decay only touches matrices (rank ≥ 2), leaving
    /// biases, norms and embedding vectors undecayed.
    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let g = grads.get(id);
            let i = id.index();
            let decay = store.get(id).rank() >= 2;
            let p = store.get_mut(id);
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((pv, mv), vv), &gv) in p
                .data_mut()
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut())
                .zip(g.data())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                if decay {
                    *pv -= lr * self.weight_decay * *pv;
                }
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Linear warmup from zero followed by cosine annealing to `min_lr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl CosineSchedule {
    /// Warmup covering `warmup_fraction` of `total_steps`.
    pub fn new(base_lr: f64, warmup_fraction: f64, total_steps: u64) -> Self {
        Self {
            base_lr,
            min_lr: 0.0,
            warmup_steps: (warmup_fraction * total_steps as f64).round() as u64,
            total_steps,
        }
    }

    pub fn lr(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let t = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let s = CosineSchedule::new(1.5e-4, 0.05, 1000);
        assert_eq!(s.warmup_steps, 50);
        assert_eq!(s.lr(0), 0.0);
        assert!((s.lr(50) - 1.5e-4).abs() < 1e-18);
        assert!(s.lr(25) < s.lr(50));
        assert!(s.lr(1000).abs() < 1e-18);
        assert!(s.lr(600) < s.lr(300));
    }

    #[test]
    fn adamw_descends_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::new(&[1, 2], vec![3.0, -2.0]).unwrap());
        let mut opt = AdamW::new(&store, 0.0);
        for _ in 0..2000 {
            // grad of sum(w^2)
            let g = store.get(id).scale(2.0);
            let mut grads = ParamGrads::zeros_like(&store);
            grads.add_assign(&single(&store, g)).unwrap();
            opt.step(&mut store, &grads, 1e-2);
        }
        assert!(store.get(id).max_abs() < 1e-2);
    }

    fn single(store: &ParamStore, g: Tensor) -> ParamGrads {
        let tape = crate::Tape::new();
        let bound = crate::Bound::new(&tape, store);
        let w = bound.var(store.ids().next().unwrap());
        let c = tape.constant(g);
        let loss = w.mul(c).unwrap().sum();
        bound.gradients(&tape.backward(loss).unwrap())
    }
}
