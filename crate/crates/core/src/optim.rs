//! Adam with bias-corrected moments.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::nn::Params;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub hyper: AdamConfig,
}

impl OptimizerState {
    pub fn new(param_count: usize, hyper: AdamConfig) -> Self {
        OptimizerState {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step_count: 0,
            hyper,
        }
    }
}

/// Applies one Adam update to `model` given gradients in its flat layout.
pub fn train_step<P: Params + ?Sized>(model: &mut P, state: &mut OptimizerState, grads: &[f64]) -> Result<()> {
    if grads.len() != model.param_count() || state.first_moment.len() != grads.len() {
        return Err(Error::shape(format!(
            "gradient of length {} for {} parameters",
            grads.len(),
            model.param_count()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!("non-finite gradient at parameter {i}")));
    }
    state.step_count += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.hyper;
    let t = state.step_count as f64;
    let correct1 = 1.0 - math::powf(beta1, t);
    let correct2 = 1.0 - math::powf(beta2, t);
    let m = &mut state.first_moment;
    let v = &mut state.second_moment;
    model.for_each_param_mut(&mut |i, p| {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / correct1;
        let v_hat = v[i] / correct2;
        *p -= learning_rate * m_hat / (math::sqrt(v_hat) + epsilon);
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bare parameter vector for optimizer tests.
    struct Flat(Vec<f64>);

    impl Params for Flat {
        fn param_count(&self) -> usize {
            self.0.len()
        }
        fn params(&self) -> Vec<f64> {
            self.0.clone()
        }
        fn for_each_param_mut(&mut self, f: &mut dyn FnMut(usize, &mut f64)) {
            self.0.iter_mut().enumerate().for_each(|(i, p)| f(i, p));
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        let mut p = Flat(vec![1.0, -2.0, 0.5]);
        let mut s = OptimizerState::new(3, AdamConfig::default());
        train_step(&mut p, &mut s, &[3.0, -0.01, 250.0]).unwrap();
        assert_eq!(s.step_count, 1);
        let expect = [1.0 - 1e-3, -2.0 + 1e-3, 0.5 - 1e-3];
        for (a, b) in p.0.iter().zip(expect) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Flat(vec![1.0, 2.0]);
        let mut s = OptimizerState::new(2, AdamConfig::default());
        train_step(&mut p, &mut s, &[0.0, 0.0]).unwrap();
        assert_eq!(p.0, vec![1.0, 2.0]);
        assert_eq!(s.first_moment, vec![0.0, 0.0]);
    }

    #[test]
    fn moments_decay_under_zero_gradient() {
        let mut p = Flat(vec![0.0]);
        let mut s = OptimizerState::new(1, AdamConfig::default());
        train_step(&mut p, &mut s, &[1.0]).unwrap();
        let (m, v) = (s.first_moment[0], s.second_moment[0]);
        train_step(&mut p, &mut s, &[0.0]).unwrap();
        assert!((s.first_moment[0] - 0.9 * m).abs() < 1e-15);
        assert!((s.second_moment[0] - 0.999 * v).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = Flat(vec![0.0]);
        let mut s = OptimizerState::new(1, AdamConfig::default());
        assert!(matches!(
            train_step(&mut p, &mut s, &[f64::NAN]),
            Err(Error::Numeric(_))
        ));
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn descends_scalar_quadratic() {
        // Oracle: plain scalar re-simulation of the update rule on f(x) = x².
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let (mut x, mut m, mut v) = (5.0_f64, 0.0_f64, 0.0_f64);
        for t in 1..=100 {
            let g = 2.0 * x;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9_f64.powi(t));
            let vh = v / (1.0 - 0.999_f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }

        let mut p = Flat(vec![5.0]);
        let mut s = OptimizerState::new(1, cfg);
        for _ in 0..100 {
            let g = 2.0 * p.0[0];
            train_step(&mut p, &mut s, &[g]).unwrap();
        }
        assert!((p.0[0] - x).abs() < 1e-12);
        assert!(p.0[0] * p.0[0] < 25.0);
        assert!(p.0[0].abs() < 5.0);
    }
}
