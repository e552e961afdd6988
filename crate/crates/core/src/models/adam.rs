use ndarray::{Array1, ArrayView1, ArrayViewMut1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0) || !in_unit(self.beta1) || !in_unit(self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!("bad Adam config {self:?}")));
        }
        Ok(())
    }
}

/// Adam with bias correction, tracking one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Array1<f64>,
    second_moment: Array1<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            first_moment: Array1::zeros(len),
            second_moment: Array1::zeros(len),
            step_count: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> ArrayView1<'_, f64> {
        self.first_moment.view()
    }

    pub fn second_moment(&self) -> ArrayView1<'_, f64> {
        self.second_moment.view()
    }

    /// One update in place. With `maximize` the parameters move along `+grad`.
    pub fn step(&mut self, mut params: ArrayViewMut1<'_, f64>, grad: ArrayView1<'_, f64>, maximize: bool) -> Result<()> {
        check_dim(self.len(), params.len())?;
        check_dim(self.len(), grad.len())?;
        self.step_count += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let sign = if maximize { -1.0 } else { 1.0 };
        Zip::from(&mut params)
            .and(&mut self.first_moment)
            .and(&mut self.second_moment)
            .and(&grad)
            .for_each(|p, m, v, &g| {
                let g = sign * g;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = AdamState::new(AdamConfig::default(), 3).unwrap();
        let mut p = array![1.0, -2.0, 0.5];
        let before = p.clone();
        for _ in 0..5 {
            s.step(p.view_mut(), array![0.0, 0.0, 0.0].view(), false).unwrap();
        }
        assert_eq!(p, before);
        assert!(s.first_moment().iter().all(|&m| m == 0.0));
        assert!(s.second_moment().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = 1, v̂ = 1 after one step, so Δ = lr / (1 + eps).
        let mut s = AdamState::new(AdamConfig::with_lr(0.1), 1).unwrap();
        let mut p = array![0.0];
        s.step(p.view_mut(), array![1.0].view(), false).unwrap();
        let expect = -0.1 / (1.0 + 1e-8);
        assert!((p[0] - expect).abs() < 1e-15, "{}", p[0]);

        let mut s = AdamState::new(AdamConfig::with_lr(0.1), 1).unwrap();
        let mut q = array![0.0];
        s.step(q.view_mut(), array![1.0].view(), true).unwrap();
        assert!((q[0] + expect).abs() < 1e-15);
    }

    #[test]
    fn state_progresses() {
        let mut s = AdamState::new(AdamConfig::with_lr(0.1), 1).unwrap();
        let mut p = array![0.0];
        s.step(p.view_mut(), array![1.0].view(), false).unwrap();
        let d1 = p[0];
        s.step(p.view_mut(), array![1.0].view(), false).unwrap();
        let d2 = p[0] - d1;
        assert_eq!(s.step_count(), 2);
        assert_ne!(d1.to_bits(), d2.to_bits());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut s = AdamState::new(AdamConfig::default(), 2).unwrap();
        let mut p = array![0.0, 0.0];
        assert!(s.step(p.view_mut(), array![1.0].view(), false).is_err());
        let mut q = array![0.0];
        assert!(s.step(q.view_mut(), array![1.0].view(), false).is_err());
        assert!(AdamState::new(AdamConfig { beta1: 1.0, ..Default::default() }, 2).is_err());
    }
}
