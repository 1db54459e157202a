//! AdamW with cosine-annealed learning rate.

use ndarray::{Array2, Zip};

/// Learning rate at `step` of `total_steps`, annealed from `base` to zero.
pub fn cosine_annealing(base: f64, step: usize, total_steps: usize) -> f64 {
    if total_steps == 0 {
        return base;
    }
    let progress = step.min(total_steps) as f64 / total_steps as f64;
    0.5 * base * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Adam with decoupled weight decay. One instance per parameter matrix.
#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: Array2<f64>,
    v: Array2<f64>,
}

impl AdamW {
    pub fn new(shape: (usize, usize), beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }

    pub fn step(&mut self, params: &mut Array2<f64>, grad: &Array2<f64>, lr: f64) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let bias1 = 1.0 - b1.powi(self.step);
        let bias2 = 1.0 - b2.powi(self.step);
        let decay = 1.0 - lr * self.weight_decay;
        let eps = self.eps;
        Zip::from(params)
            .and(grad)
            .and(&mut self.m)
            .and(&mut self.v)
            .for_each(|w, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *w = *w * decay - lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
}
