//! Adam optimizer with a step-based exponential learning-rate decay.

use super::layers::Scalar;
use super::net::{ModelGrads, ModelParams};

pub struct Adam<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay: f64,
    pub decay_steps: usize,
    step: usize,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64, decay: f64, decay_steps: usize, params: &ModelParams<S>) -> Adam<S> {
        let mut sizes = Vec::new();
        params.for_each_tensor(|_, _, t| sizes.push(t.len()));
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay,
            decay_steps,
            step: 0,
            m: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.lr * self.decay.powi((self.step / self.decay_steps.max(1)) as i32)
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One update using gradients already scaled to a batch mean.
    pub fn step(&mut self, params: &mut ModelParams<S>, grads: &ModelGrads<S>) {
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let b1 = S::from64(self.beta1);
        let b2 = S::from64(self.beta2);
        let one_m_b1 = S::from64(1.0 - self.beta1);
        let one_m_b2 = S::from64(1.0 - self.beta2);
        let corr1 = S::from64(1.0 / (1.0 - self.beta1.powi(t)));
        let corr2 = S::from64(1.0 / (1.0 - self.beta2.powi(t)));
        let lr_s = S::from64(lr);
        let eps = S::from64(self.eps);

        let grad_slices = grads.tensors();
        let m = &mut self.m;
        let v = &mut self.v;
        params.for_each_tensor_mut(|idx, _, values| {
            let g = grad_slices[idx];
            let m_t = &mut m[idx];
            let v_t = &mut v[idx];
            for i in 0..values.len() {
                m_t[i] = b1 * m_t[i] + one_m_b1 * g[i];
                v_t[i] = b2 * v_t[i] + one_m_b2 * g[i] * g[i];
                let mhat = m_t[i] * corr1;
                let vhat = v_t[i] * corr2;
                values[i] = values[i] - lr_s * mhat / (vhat.sqrt() + eps);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelArch, ModelOptions};

    #[test]
    fn lr_decays_every_decay_steps() {
        let arch = ModelArch::build(ModelOptions { channel_scale: 0.0625, ..Default::default() });
        let params = ModelParams::<f64>::init(arch, 1);
        let mut adam = Adam::new(1e-4, 0.8, 10, &params);
        assert!((adam.current_lr() - 1e-4).abs() < 1e-18);
        adam.step = 10;
        assert!((adam.current_lr() - 0.8e-4).abs() < 1e-18);
        adam.step = 25;
        assert!((adam.current_lr() - 0.64e-4).abs() < 1e-18);
    }
}
