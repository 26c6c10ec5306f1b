//! Adam with bias correction, plus global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        let zeros = |p: &Tensor<T>| Tensor::zeros(p.shape());
        Self {
            config,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::dim("adam_step", &[params.len()], &[grads.len()]));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::dim("adam_step", p.shape(), g.shape()));
            }
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.t as i32));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        let one = T::one();
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v.f64() * v.f64())
        .sum();
    let norm = sq.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let k = T::of(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = vec![Tensor::<f64>::from_f64(&[2], &[0.3, -0.7]).unwrap()];
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), &p);
        st.step(&mut p, &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = vec![Tensor::<f64>::zeros(&[1])];
        let mut st = AdamState::new(AdamConfig::default(), &p);
        st.step(&mut p, &[Tensor::scalar(0.1).reshape(vec![1]).unwrap()])
            .unwrap();
        let expected = -1e-3 * 0.1 / (0.1 + 1e-8);
        assert!((p[0].item() - expected).abs() < 1e-15);
        assert!((p[0].item() + 9.99999e-4).abs() < 1e-9);
    }

    // Hand-unrolled oracle for two steps on f(θ) = θ², θ₀ = 1.
    #[test]
    fn two_steps_reduce_quadratic() {
        let c = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut theta = vec![Tensor::<f64>::from_f64(&[1], &[1.0]).unwrap()];
        let mut st = AdamState::new(c, &theta);
        let mut losses = vec![1.0];
        let (mut m, mut v, mut oracle) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=2 {
            let g = 2.0 * theta[0].item();
            st.step(&mut theta, &[Tensor::from_f64(&[1], &[g]).unwrap()])
                .unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            oracle -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((theta[0].item() - oracle).abs() < 1e-12);
            losses.push(theta[0].item().powi(2));
        }
        assert!(losses[1] < losses[0] && losses[2] < losses[1]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![Tensor::<f32>::zeros(&[2])];
        let mut st = AdamState::new(AdamConfig::default(), &p);
        assert!(st.step(&mut p, &[Tensor::zeros(&[3])]).is_err());
        assert_eq!(st.steps(), 0);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut g = vec![
            Tensor::<f64>::from_f64(&[1], &[3.0]).unwrap(),
            Tensor::<f64>::from_f64(&[1], &[4.0]).unwrap(),
        ];
        let n = clip_grad_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        assert!((g[0].item() - 0.6).abs() < 1e-12 && (g[1].item() - 0.8).abs() < 1e-12);
    }
}
