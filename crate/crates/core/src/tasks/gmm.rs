use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use super::branin::BRANIN_MAXIMA;
use crate::error::check_dim;
use crate::{rng, Error, Result};

/// Mixture of isotropic Gaussians sharing one variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmTarget {
    pub means: Vec<Vec<f64>>,
    pub variance: f64,
    pub weights: Vec<f64>,
}

impl GmmTarget {
    pub fn new(means: Vec<Vec<f64>>, variance: f64, weights: Vec<f64>) -> Result<Self> {
        let g = Self { means, variance, weights };
        g.validate()?;
        Ok(g)
    }

    /// Equal weights.
    pub fn uniform(means: Vec<Vec<f64>>, variance: f64) -> Result<Self> {
        let k = means.len().max(1);
        Self::new(means, variance, vec![1.0 / k as f64; k])
    }

    /// Emulates the distribution of Branin optima: one component at each
    /// maximizer, variance 0.25, equal weights.
    pub fn branin_optima() -> Self {
        Self::uniform(BRANIN_MAXIMA.iter().map(|m| m.to_vec()).collect(), 0.25).expect("valid constants")
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let d = self.means[0].len();
        if d == 0 {
            return Err(Error::invalid("component means must be nonempty"));
        }
        for m in &self.means {
            check_dim(d, m.len())?;
        }
        check_dim(self.means.len(), self.weights.len())?;
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::invalid(format!("variance must be positive, got {}", self.variance)));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights must be a probability vector: {:?}", self.weights)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Per-component `log w_c + log N(z; μ_c, vI)`.
    fn component_logs(&self, z: ArrayView1<'_, f64>) -> Vec<f64> {
        let d = self.dim() as f64;
        let norm = -0.5 * d * (2.0 * std::f64::consts::PI * self.variance).ln();
        self.means
            .iter()
            .zip(&self.weights)
            .map(|(m, &w)| {
                let sq: f64 = z.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                w.ln() + norm - sq / (2.0 * self.variance)
            })
            .collect()
    }

    /// `(log p(z), ∇ log p(z))` via exact responsibilities.
    pub fn log_density_and_grad(&self, z: ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)> {
        check_dim(self.dim(), z.len())?;
        let logs = self.component_logs(z);
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        let lse = top + total.ln();
        let mut grad = Array1::zeros(z.len());
        for (m, l) in self.means.iter().zip(&logs) {
            let resp = (l - lse).exp();
            for k in 0..z.len() {
                grad[k] += resp * (m[k] - z[k]) / self.variance;
            }
        }
        Ok((lse, grad))
    }

    pub fn log_density(&self, z: ArrayView1<'_, f64>) -> Result<f64> {
        Ok(self.log_density_and_grad(z)?.0)
    }

    /// Row-wise score `∇ log p` for a particle matrix.
    pub fn score(&self, zs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_dim(self.dim(), zs.ncols())?;
        let mut out = Array2::zeros(zs.raw_dim());
        for (i, z) in zs.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&self.log_density_and_grad(z)?.1);
        }
        Ok(out)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array2<f64>> {
        let pick = WeightedIndex::new(&self.weights).map_err(|e| Error::invalid(e.to_string()))?;
        let sd = self.variance.sqrt();
        let mut out = rng::standard_normal(rng, n, self.dim()) * sd;
        for mut row in out.rows_mut() {
            let c = pick.sample(rng);
            for (v, m) in row.iter_mut().zip(&self.means[c]) {
                *v += m;
            }
        }
        Ok(out)
    }
}

/// `(log p(z), ∇ log p(z))` for a single point.
pub fn gmm_logdensity(target: &GmmTarget, z: ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)> {
    target.log_density_and_grad(z)
}
