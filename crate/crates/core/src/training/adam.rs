use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected first and second moment estimates per parameter.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ParamStore<S>, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| vec![S::zero(); t.len()]).collect();
        AdamState { config, m: zeros(), v: zeros(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients stored on `params`; a parameter
    /// without a gradient is treated as having gradient zero.
    pub fn step(&mut self, params: &mut ParamStore<S>) -> Result<()> {
        for (_, name, t) in params.iter() {
            if t.grad.as_ref().is_some_and(|g| g.iter().any(|x| !x.is_finite())) {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let one = S::one();
        let bias1 = one - b1.powi(self.t as i32);
        let bias2 = one - b2.powi(self.t as i32);
        let (lr, eps) = (S::of(c.lr), S::of(c.eps));
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let t = params.get_mut(id);
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            let grad = t.grad.take();
            for (i, p) in t.values_mut().iter_mut().enumerate() {
                let g = grad.as_ref().map_or(S::zero(), |g| g[i]);
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            t.grad = grad;
        }
        Ok(())
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm<S: Scalar>(params: &mut ParamStore<S>, max_norm: f64) -> f64 {
    let sq: f64 = params
        .iter()
        .filter_map(|(_, _, t)| t.grad.as_ref())
        .flat_map(|g| g.iter().map(|x| x.to_f64_lossy().powi(2)))
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = S::of(max_norm / norm);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            if let Some(g) = params.get_mut(id).grad.as_mut() {
                g.iter_mut().for_each(|x| *x *= scale);
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn store(w: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.register("w", Tensor::vector(&[w]).unwrap()).unwrap();
        s
    }

    fn set_grad(s: &mut ParamStore<f64>, g: f64) {
        let id = s.id("w").unwrap();
        s.get_mut(id).grad = Some(vec![g]);
    }

    fn w(s: &ParamStore<f64>) -> f64 {
        s.by_name("w").unwrap().values()[0]
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [0.3, -7.0, 1e-3] {
            let mut s = store(1.0);
            let mut adam = AdamState::new(&s, AdamConfig::default());
            set_grad(&mut s, g);
            adam.step(&mut s).unwrap();
            let expected = 1e-3 * g / (g.abs() + 1e-8);
            assert!(((1.0 - w(&s)) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn first_step_scale_invariant() {
        let cfg = AdamConfig { eps: 1e-12, ..Default::default() };
        let delta = |g: f64| {
            let mut s = store(0.0);
            let mut adam = AdamState::new(&s, cfg);
            set_grad(&mut s, g);
            adam.step(&mut s).unwrap();
            -w(&s)
        };
        let (a, b) = (delta(0.02), delta(20.0));
        assert!(((a - b) / b).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store(0.75);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        for _ in 0..50 {
            s.zero_grads();
            adam.step(&mut s).unwrap();
        }
        assert_eq!(w(&s), 0.75);
        assert_eq!(adam.steps(), 50);
    }

    #[test]
    fn quadratic_converges() {
        // scalar oracle: the same recurrence on f(w) = w^2 written out by hand
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let (mut wo, mut m, mut v) = (1.0f64, 0.0, 0.0);
        let mut oracle_hit = None;
        for t in 1..=500 {
            let g = 2.0 * wo;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            wo -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            if wo.abs() < 1e-3 && oracle_hit.is_none() {
                oracle_hit = Some(t);
            }
        }
        assert!(oracle_hit.is_some());

        let mut s = store(1.0);
        let mut adam = AdamState::new(&s, AdamConfig { lr, ..Default::default() });
        let mut hit = None;
        for t in 1..=500 {
            let g = 2.0 * w(&s);
            set_grad(&mut s, g);
            adam.step(&mut s).unwrap();
            if w(&s).abs() < 1e-3 && hit.is_none() {
                hit = Some(t);
            }
        }
        assert_eq!(hit, oracle_hit);
        assert_eq!(w(&s), wo);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut s = store(1.0);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        set_grad(&mut s, f64::NAN);
        match adam.step(&mut s) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "w"),
            other => panic!("{other:?}"),
        }
        assert_eq!(w(&s), 1.0);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut s = store(0.0);
        set_grad(&mut s, -12.0);
        assert_eq!(clip_global_norm(&mut s, 5.0), 12.0);
        assert!((s.by_name("w").unwrap().grad.as_ref().unwrap()[0] + 5.0).abs() < 1e-12);
    }
}
