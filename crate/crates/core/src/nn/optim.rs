use super::params::ParamSet;
use super::tensor::Tensor;

/// Adam with optional decoupled weight decay (AdamW when `weight_decay > 0`).
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(learning_rate: f32) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn adamw(learning_rate: f32, weight_decay: f32) -> Self {
        Self {
            weight_decay,
            ..Self::new(learning_rate)
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Applies one update; `grads` follows the parameter order of `params`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len(), "gradient count does not match parameters");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let lr = self.learning_rate;
        for (((p, g), m), v) in params.tensors_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (pd, gd) = (p.data_mut(), g.data());
            for i in 0..pd.len() {
                let md = &mut m.data_mut()[i];
                *md = self.beta1 * *md + (1.0 - self.beta1) * gd[i];
                let mhat = *md / bc1;
                let vd = &mut v.data_mut()[i];
                *vd = self.beta2 * *vd + (1.0 - self.beta2) * gd[i] * gd[i];
                let vhat = *vd / bc2;
                pd[i] -= lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * pd[i]);
            }
        }
    }
}
