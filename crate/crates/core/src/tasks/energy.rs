use ndarray::{Array1, Array2, ArrayView2};

use crate::{Error, Result};

/// Batched scalar field over rows of a matrix.
pub type Field<'a> = Box<dyn Fn(ArrayView2<'_, f64>) -> Result<Array1<f64>> + 'a>;
/// Batched gradient of a [`Field`], one gradient row per input row.
pub type FieldGrad<'a> = Box<dyn Fn(ArrayView2<'_, f64>) -> Result<Array2<f64>> + 'a>;

/// Step for the central-difference fallback.
pub const FD_STEP: f64 = 1e-5;

/// `E(z) = −λ1 (y_target − g(z))² + λ2 (Σf̃(z) − ‖z‖²/2)`.
pub struct ConditionalEnergy<'a> {
    pub lambda1: f64,
    pub lambda2: f64,
    pub y_target: f64,
    pub predictor: Field<'a>,
    pub predictor_grad: Option<FieldGrad<'a>>,
    pub prior_logratio: Field<'a>,
    pub prior_grad: Option<FieldGrad<'a>>,
}

impl<'a> ConditionalEnergy<'a> {
    /// `λ1 = 20`, `λ2 = 1`, no analytic gradients.
    pub fn new(y_target: f64, predictor: Field<'a>, prior_logratio: Field<'a>) -> Self {
        Self { lambda1: 20.0, lambda2: 1.0, y_target, predictor, predictor_grad: None, prior_logratio, prior_grad: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 > 0.0) {
            return Err(Error::invalid(format!("need lambda1 >= 0 and lambda2 > 0, got {} and {}", self.lambda1, self.lambda2)));
        }
        Ok(())
    }
}

pub fn conditional_logdensity(energy: &ConditionalEnergy<'_>, zs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let g = (energy.predictor)(zs)?;
    let f = (energy.prior_logratio)(zs)?;
    let sq = zs.map_axis(ndarray::Axis(1), |r| r.dot(&r));
    let out = g.mapv(|g| -energy.lambda1 * (energy.y_target - g).powi(2)) + (f - sq * 0.5) * energy.lambda2;
    check_finite(&out, zs)?;
    Ok(out)
}

fn check_finite(v: &Array1<f64>, zs: ArrayView2<'_, f64>) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteEstimate(format!("conditional energy at z = {}", zs.row(i))));
    }
    Ok(())
}

fn central_differences(field: &Field<'_>, zs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(zs.raw_dim());
    for k in 0..zs.ncols() {
        let mut up = zs.to_owned();
        let mut down = zs.to_owned();
        up.column_mut(k).mapv_inplace(|v| v + FD_STEP);
        down.column_mut(k).mapv_inplace(|v| v - FD_STEP);
        let diff = (field(up.view())? - field(down.view())?) / (2.0 * FD_STEP);
        out.column_mut(k).assign(&diff);
    }
    Ok(out)
}

/// Row-wise `∇_z E`. The flag reports whether any term fell back to central
/// differences.
pub fn conditional_logdensity_grad(energy: &ConditionalEnergy<'_>, zs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, bool)> {
    energy.validate()?;
    let mut used_fd = false;
    let g = (energy.predictor)(zs)?;
    check_finite(&g, zs)?;
    let dg = match &energy.predictor_grad {
        Some(grad) => grad(zs)?,
        None => {
            used_fd = true;
            central_differences(&energy.predictor, zs)?
        }
    };
    let df = match &energy.prior_grad {
        Some(grad) => grad(zs)?,
        None => {
            used_fd = true;
            central_differences(&energy.prior_logratio, zs)?
        }
    };
    // d/dz −λ1 (y − g)² = 2 λ1 (y − g) ∇g
    let coef = g.mapv(|g| 2.0 * energy.lambda1 * (energy.y_target - g)).insert_axis(ndarray::Axis(1));
    let out = &dg * &coef + (&df - &zs) * energy.lambda2;
    if let Some((i, _)) = out.outer_iter().enumerate().find(|(_, r)| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteEstimate(format!("conditional energy gradient at z = {}", zs.row(i))));
    }
    Ok((out, used_fd))
}
