use alloc::vec;
use alloc::vec::Vec;

use super::TrainConfig;

/// Adam with bias correction; `weight_decay` is applied decoupled.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, shapes: &[usize]) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            weight_decay: cfg.weight_decay,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) {
        assert_eq!(params.len(), grads.len(), "adam: parameter/gradient count");
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let update = (m[i] / bc1) / (libm::sqrt(v[i] / bc2) + self.epsilon);
                p[i] -= self.lr * (update + self.weight_decay * p[i]);
            }
        }
    }
}
