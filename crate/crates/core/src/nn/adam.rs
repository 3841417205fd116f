use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::float::Float;
use super::network::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Step size at step `t` is `lr / (1 + decay·t)`.
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay: 1e-5,
        }
    }
}

/// First and second moments per trainable buffer plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Float> AdamState<T> {
    pub fn new(cfg: AdamConfig, lens: &[usize]) -> Result<Self> {
        if !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) || !(cfg.decay >= 0.0)
        {
            return Err(Error::invalid(format!("invalid ADAM configuration {cfg:?}")));
        }
        Ok(AdamState {
            cfg,
            step: 0,
            m: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
        })
    }

    /// State for the trainable buffers of `params`.
    pub fn for_params(cfg: AdamConfig, params: &NetworkParams<T>) -> Result<Self> {
        let lens: Vec<usize> = params.buffers().iter().filter(|(_, t)| *t).map(|(b, _)| b.len()).collect();
        Self::new(cfg, &lens)
    }

    /// Learning rate used by step `t` (1-based).
    pub fn lr_at(&self, t: u64) -> f64 {
        self.cfg.lr / (1.0 + self.cfg.decay * t as f64)
    }

    pub fn step_buffers(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("ADAM state does not match the parameter list"));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape("ADAM buffer length mismatch"));
            }
        }
        self.step += 1;
        let t = self.step;
        let c = &self.cfg;
        let lr = self.lr_at(t);
        let bc1 = 1.0 - c.beta1.powi(t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - c.beta2.powi(t.min(i32::MAX as u64) as i32);
        let (b1, b2) = (T::c(c.beta1), T::c(c.beta2));
        let (one_b1, one_b2) = (T::c(1.0 - c.beta1), T::c(1.0 - c.beta2));
        let (inv_bc1, inv_bc2) = (T::c(1.0 / bc1), T::c(1.0 / bc2));
        let (lr, eps) = (T::c(lr), T::c(c.eps));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let mh = m[i] * inv_bc1;
                let vh = v[i] * inv_bc2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Updates every trainable buffer of `params` from `grads`.
    pub fn step(&mut self, params: &mut NetworkParams<T>, grads: &NetworkParams<T>) -> Result<()> {
        let mut ps: Vec<&mut [T]> = params
            .buffers_mut()
            .into_iter()
            .filter(|(_, t)| *t)
            .map(|(b, _)| b.as_mut_slice())
            .collect();
        let gs: Vec<&[T]> = grads.buffers().into_iter().filter(|(_, t)| *t).map(|(b, _)| b).collect();
        self.step_buffers(&mut ps, &gs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut s = AdamState::<f64>::new(AdamConfig::default(), &[3]).unwrap();
        let mut p = vec![0.5, -1.0, 2.0];
        let orig = p.clone();
        s.step_buffers(&mut [p.as_mut_slice()], &[&[0.0; 3]]).unwrap();
        assert_eq!(p, orig);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut s = AdamState::<f64>::new(AdamConfig::default(), &[4]).unwrap();
        let mut p = vec![0.0; 4];
        let g = [1e-3, -0.5, 3.0, -1e-3];
        s.step_buffers(&mut [p.as_mut_slice()], &[&g]).unwrap();
        for (x, gi) in p.iter().zip(g) {
            assert!((x + 0.005 * gi.signum()).abs() < 1e-6, "{x}");
        }
    }

    #[test]
    fn converges_on_quadratic() {
        // f(x) = Σ a_i (x_i − c_i)²
        let a = [1.0, 3.0, 0.5];
        let c = [0.3, -0.2, 0.1];
        let cfg = AdamConfig {
            lr: 0.05,
            decay: 0.0,
            ..Default::default()
        };
        let mut s = AdamState::<f64>::new(cfg, &[3]).unwrap();
        let mut x = vec![1.0, 1.0, -1.0];
        for _ in 0..200 {
            let g: Vec<f64> = (0..3).map(|i| 2.0 * a[i] * (x[i] - c[i])).collect();
            s.step_buffers(&mut [x.as_mut_slice()], &[&g]).unwrap();
        }
        for i in 0..3 {
            assert!((x[i] - c[i]).abs() < 1e-3, "{x:?}");
        }
    }

    #[test]
    fn decayed_rate() {
        let s = AdamState::<f32>::new(AdamConfig::default(), &[]).unwrap();
        assert!((s.lr_at(100_000) - 0.0025).abs() < 1e-12);
        assert!(AdamState::<f32>::new(AdamConfig { lr: 0.0, ..Default::default() }, &[]).is_err());
    }
}
