//! Gradient-based samplers over particle matrices (one particle per row).
//!
//! Both samplers take a batched score function `∇ log p`, mapping a
//! `Q × d` particle matrix to a `Q × d` gradient matrix.

mod langevin;
mod svgd;

pub use langevin::{langevin_run, LangevinConfig};
pub use svgd::{svgd_bandwidth, svgd_bandwidth_with_floor, svgd_direction, svgd_run, SvgdConfig, SvgdTrace};

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

pub(crate) fn checked_grad<G>(grad: &mut G, zs: ArrayView2<'_, f64>, step: usize) -> Result<Array2<f64>>
where
    G: FnMut(ArrayView2<'_, f64>) -> Result<Array2<f64>>,
{
    let g = grad(zs)?;
    if g.dim() != zs.dim() {
        return Err(Error::invalid(format!("score returned shape {:?}, expected {:?}", g.dim(), zs.dim())));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step, what: "score function".into() });
    }
    Ok(g)
}
