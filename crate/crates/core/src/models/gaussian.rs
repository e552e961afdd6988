use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use super::RatioModel;
use crate::error::check_dim;
use crate::{rng, Error, Result};

/// `p_α = N(α, I)` against the noise `q0 = N(0, I)`.
///
/// The ratio is available in closed form, `log r_α(x) = α·x − ||α||²/2`, with
/// the partition function already absorbed. The mean doubles as the natural
/// parameter and the model parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLocationModel {
    mean: Array1<f64>,
}

impl GaussianLocationModel {
    pub fn new(mean: Array1<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::invalid("Gaussian location model needs dim >= 1"));
        }
        Ok(Self { mean })
    }

    pub fn from_slice(mean: &[f64]) -> Result<Self> {
        Self::new(Array1::from(mean.to_vec()))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    pub fn set_mean(&mut self, mean: Array1<f64>) -> Result<()> {
        check_dim(self.dim(), mean.len())?;
        self.mean = mean;
        Ok(())
    }

    fn half_sq_norm(&self) -> f64 {
        0.5 * self.mean.dot(&self.mean)
    }

    pub fn log_ratio_at(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.mean.dot(&x) - self.half_sq_norm())
    }

    /// `∇_α f_α(x) = x − α`.
    pub fn grad_log_ratio_at(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(&x - &self.mean)
    }
}

impl RatioModel for GaussianLocationModel {
    fn num_params(&self) -> usize {
        self.dim()
    }

    fn input_dim(&self) -> usize {
        self.dim()
    }

    fn log_ratio(&self, xs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        check_dim(self.dim(), xs.ncols())?;
        let c = self.half_sq_norm();
        Ok(xs.dot(&self.mean).mapv_into(|v| v - c))
    }

    fn pullback(&self, xs: ArrayView2<'_, f64>, weights: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        check_dim(self.dim(), xs.ncols())?;
        check_dim(xs.nrows(), weights.len())?;
        // Σ w_i (x_i − α) = Xᵀw − (Σ w) α
        let total: f64 = weights.sum();
        Ok(xs.t().dot(&weights) - &(&self.mean * total))
    }
}

/// `count` i.i.d. draws from `N(mean, I)`, one per row.
pub fn sample_gaussian_location<R: Rng + ?Sized>(
    mean: ArrayView1<'_, f64>,
    count: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    if count == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let mut out = rng::standard_normal(rng, count, mean.len());
    out += &mean;
    Ok(out)
}
