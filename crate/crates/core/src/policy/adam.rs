//! Adam with bias correction and a separate learning rate for `log Z`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub z_lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn new(lr: f64, z_lr: f64) -> Self {
        Self { lr, z_lr, beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    m_z: f64,
    v_z: f64,
    steps: u64,
}

impl OptimizerState {
    pub fn new(cfg: AdamConfig, num_params: usize) -> Self {
        Self { cfg, m: vec![0.0; num_params], v: vec![0.0; num_params], m_z: 0.0, v_z: 0.0, steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update of `params` and `log_z` against gradients `grad`, `grad_z`.
    pub fn step(&mut self, params: &mut [f64], log_z: &mut f64, grad: &[f64], grad_z: f64) {
        assert_eq!(params.len(), self.m.len(), "moment shape mismatch");
        assert_eq!(grad.len(), self.m.len(), "gradient shape mismatch");
        self.steps += 1;
        let AdamConfig { lr, z_lr, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.steps as i32);
        let bc2 = 1.0 - beta2.powi(self.steps as i32);
        let update = |m: &mut f64, v: &mut f64, g: f64, lr: f64| -> f64 {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            lr * mh / (vh.sqrt() + eps)
        };
        for i in 0..params.len() {
            let g = grad[i];
            if g == 0.0 && self.m[i] == 0.0 && self.v[i] == 0.0 {
                continue;
            }
            params[i] -= update(&mut self.m[i], &mut self.v[i], g, lr);
        }
        *log_z -= update(&mut self.m_z, &mut self.v_z, grad_z, z_lr);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut opt = OptimizerState::new(AdamConfig::new(1e-3, 1e-2), 3);
        let mut p = vec![0.5, -0.25, 1.0];
        let mut z = 0.3;
        for _ in 0..10 {
            opt.step(&mut p, &mut z, &[0.0; 3], 0.0);
        }
        assert_eq!(p, vec![0.5, -0.25, 1.0]);
        assert_eq!(z, 0.3);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let mut opt = OptimizerState::new(AdamConfig::new(1e-3, 5e-2), 2);
        let mut p = vec![0.0, 0.0];
        let mut z = 0.0;
        opt.step(&mut p, &mut z, &[0.37, -2.0], 4.0);
        // m_hat = g, v_hat = g^2 at t = 1, so the step is lr * g / (|g| + eps)
        assert!((p[0] + 1e-3).abs() < 1e-10);
        assert!((p[1] - 1e-3).abs() < 1e-10);
        assert!((z + 5e-2).abs() < 1e-9);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut opt = OptimizerState::new(AdamConfig::new(1e-2, 1e-2), 1);
        let mut p = vec![0.0];
        let mut z = 0.0;
        for _ in 0..200 {
            opt.step(&mut p, &mut z, &[0.5], -0.1);
        }
        assert!(p[0] < -1.0);
        assert!(z > 1.0);
    }
}
