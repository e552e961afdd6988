use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::checked_grad;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LangevinConfig {
    pub steps: usize,
    /// `s` in `z ← z + (s²/2) ∇log p(z) + s ε`.
    pub step_size: f64,
    pub seed: u64,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self { steps: 100, step_size: 0.4, seed: 0 }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!("langevin needs steps >= 1 and step_size > 0: {self:?}")));
        }
        Ok(())
    }
}

/// Unadjusted Langevin dynamics applied to every particle.
pub fn langevin_run<G>(mut grad: G, init: ArrayView2<'_, f64>, config: &LangevinConfig) -> Result<Array2<f64>>
where
    G: FnMut(ArrayView2<'_, f64>) -> Result<Array2<f64>>,
{
    config.validate()?;
    let mut stream = rng::derive(config.seed, &[0x6c64]);
    let s = config.step_size;
    let mut z = init.to_owned();
    for step in 0..config.steps {
        let g = checked_grad(&mut grad, z.view(), step)?;
        let noise = rng::standard_normal(&mut stream, z.nrows(), z.ncols());
        z.scaled_add(0.5 * s * s, &g);
        z.scaled_add(s, &noise);
    }
    Ok(z)
}
