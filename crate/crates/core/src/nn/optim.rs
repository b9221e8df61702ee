use serde::{Deserialize, Serialize};

use super::Parameters;
#[cfg(test)]
use super::Tensor2D;
use crate::error::{Error, Result};

fn check_finite(grads: &impl Parameters) -> Result<()> {
    let mut bad = None;
    grads.visit("", &mut |name, t| {
        if bad.is_none() && !t.is_finite() {
            bad = Some(name.to_string());
        }
    });
    bad.map_or(Ok(()), |name| Err(Error::NonFiniteGradient(name)))
}

fn collect(grads: &impl Parameters) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    grads.visit("", &mut |_, t| out.push(t.data().to_vec()));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step<P: Parameters>(&self, params: &mut P, grads: &P) -> Result<()> {
        check_finite(grads)?;
        let g = collect(grads);
        let mut i = 0;
        params.visit_mut("", &mut |_, t| {
            for (w, d) in t.data_mut().iter_mut().zip(&g[i]) {
                *w -= self.lr * d;
            }
            i += 1;
        });
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; first and second moments per parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        check_finite(grads)?;
        let g = collect(grads);
        if self.m.is_empty() {
            self.m = g.iter().map(|s| vec![0.0; s.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut i = 0;
        params.visit_mut("", &mut |_, t| {
            for (j, w) in t.data_mut().iter_mut().enumerate() {
                let d = g[i][j];
                let mj = &mut m[i][j];
                let vj = &mut v[i][j];
                *mj = beta1 * *mj + (1.0 - beta1) * d;
                *vj = beta2 * *vj + (1.0 - beta2) * d * d;
                let mhat = *mj / bc1;
                let vhat = *vj / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
            i += 1;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor2D {
        Tensor2D::from_rows(&[vec![v]]).unwrap()
    }

    #[test]
    fn sgd_single_step() {
        let mut w = scalar(0.0);
        Sgd { lr: 0.1 }.step(&mut w, &scalar(1.0)).unwrap();
        assert_eq!(w.data(), &[-0.1]);
    }

    #[test]
    fn adam_first_step_moves_by_lr_against_gradient() {
        for g in [3.7, -0.02] {
            let mut w = scalar(1.0);
            let mut adam = Adam::new(AdamConfig::default());
            adam.step(&mut w, &scalar(g)).unwrap();
            let delta = w.data()[0] - 1.0;
            assert!((delta.abs() - 1e-3).abs() < 1e-9, "{delta}");
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut w = Tensor2D::from_rows(&[vec![0.5, -2.0]]).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut w, &Tensor2D::zeros(1, 2)).unwrap();
        }
        assert_eq!(w.data(), &[0.5, -2.0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected_by_name() {
        let mut w = scalar(0.0);
        let g = Tensor2D::from_vec(1, 1, vec![f64::NAN]);
        let err = Adam::new(AdamConfig::default()).step(&mut w, &g).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(_)));
        assert_eq!(w.data(), &[0.0]);
    }
}
