//! Density models and ratio parameterizations.

mod adam;
mod gaussian;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use gaussian::{sample_gaussian_location, GaussianLocationModel};
pub use mlp::{sinusoidal_embedding, MlpConfig, MlpRatioModel, StagedMlp, EMBEDDING_DIM, LEAKY_SLOPE};

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::Result;

/// Anything exposing a parameterized log-ratio `f(x) = log r(x)` and its
/// parameter gradient.
///
/// Gradients are exposed as vector-Jacobian products: every objective in the
/// crate has the form `Σ_i c_i ∇f(x_i)` for per-sample coefficients `c_i`
/// that depend on `f(x_i)`.
pub trait RatioModel {
    fn num_params(&self) -> usize;

    fn input_dim(&self) -> usize;

    /// `f(x_i)` for every row of `xs`.
    fn log_ratio(&self, xs: ArrayView2<'_, f64>) -> Result<Array1<f64>>;

    /// `Σ_i weights[i] · ∇_θ f(x_i)`.
    fn pullback(&self, xs: ArrayView2<'_, f64>, weights: ArrayView1<'_, f64>) -> Result<Array1<f64>>;

    /// Evaluates `f`, derives the weights from it, and returns `(f, pullback)`.
    /// Models with expensive forward passes override this to evaluate once.
    fn log_ratio_with_pullback(
        &self,
        xs: ArrayView2<'_, f64>,
        weights_of: &mut dyn FnMut(ArrayView1<'_, f64>) -> Array1<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let f = self.log_ratio(xs)?;
        let w = weights_of(f.view());
        let g = self.pullback(xs, w.view())?;
        Ok((f, g))
    }
}
