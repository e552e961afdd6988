use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sweep::mean_std;
use crate::error::check_dim;
use crate::models::GaussianLocationModel;
use crate::objectives::{n2ce_gradient, sigmoid};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradErrorRow {
    pub m: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// `‖ĝ_M − (target − alpha)‖` averaged over `repeats` sample batches of size
/// `n`. Each batch is shared by every `M` in the grid.
pub fn gradient_error_vs_m(
    alpha: ArrayView1<'_, f64>,
    target: ArrayView1<'_, f64>,
    m_grid: &[f64],
    n: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<GradErrorRow>> {
    check_dim(target.len(), alpha.len())?;
    if m_grid.is_empty() {
        return Err(Error::invalid("empty M grid"));
    }
    if m_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("M grid must be strictly ascending"));
    }
    if n == 0 || repeats == 0 {
        return Err(Error::invalid("n and repeats must be positive"));
    }
    let model = GaussianLocationModel::new(alpha.to_owned())?;
    let exact = &target - &alpha;
    let d = alpha.len();
    let per_repeat: Vec<Result<Vec<f64>>> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::derive(seed, &[r as u64]);
            let mut pos = rng::standard_normal(&mut stream, n, d);
            pos += &target;
            let neg = rng::standard_normal(&mut stream, n, d);
            m_grid
                .iter()
                .map(|&m| {
                    let g = n2ce_gradient(&model, pos.view(), neg.view(), m)?;
                    let e = &g.vector - &exact;
                    Ok(e.dot(&e).sqrt())
                })
                .collect()
        })
        .collect();
    let per_repeat = per_repeat.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(m_grid
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let errs: Vec<f64> = per_repeat.iter().map(|v| v[i]).collect();
            let (mean, std) = mean_std(&errs);
            GradErrorRow { m, mean, stderr: std / (repeats as f64).sqrt() }
        })
        .collect())
}

/// Population gradient of the scaled objective for the Gaussian location
/// family, `E_q*[w ∇f] − E_pα[w ∇f]` with `w = M/(M+r)`, by tensor trapezoid
/// quadrature. Dimension at most two.
pub fn population_n2ce_gradient(alpha: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>, m: f64) -> Result<Array1<f64>> {
    check_dim(target.len(), alpha.len())?;
    let d = alpha.len();
    if d == 0 || d > 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    let log_m = m.ln();
    let half_sq = 0.5 * alpha.dot(&alpha);
    let axis = |k: usize| {
        let lo = alpha[k].min(target[k]).min(0.0) - 12.0;
        let hi = alpha[k].max(target[k]).max(0.0) + 12.0;
        let cells = ((hi - lo) / 0.01).ceil() as usize;
        let h = (hi - lo) / cells as f64;
        (0..=cells).map(move |i| (lo + i as f64 * h, if i == 0 || i == cells { 0.5 * h } else { h }))
    };
    let norm = (2.0 * std::f64::consts::PI).powf(-0.5 * d as f64);
    let mut acc = Array1::<f64>::zeros(d);
    let mut point = vec![0.0; d];
    let mut visit = |point: &[f64], weight: f64| {
        let f: f64 = point.iter().zip(alpha.iter()).map(|(x, a)| x * a).sum::<f64>() - half_sq;
        let sq = |c: ArrayView1<'_, f64>| point.iter().zip(c.iter()).map(|(x, a)| (x - a).powi(2)).sum::<f64>();
        let q_star = norm * (-0.5 * sq(target)).exp();
        let p_alpha = norm * (-0.5 * sq(alpha)).exp();
        let w = sigmoid(log_m - f);
        for k in 0..d {
            acc[k] += weight * w * (q_star - p_alpha) * (point[k] - alpha[k]);
        }
    };
    if d == 1 {
        for (x, wx) in axis(0) {
            point[0] = x;
            visit(&point, wx);
        }
    } else {
        for (x, wx) in axis(0) {
            for (y, wy) in axis(1) {
                point[0] = x;
                point[1] = y;
                visit(&point, wx * wy);
            }
        }
    }
    Ok(acc)
}

/// Total variance (trace of the covariance) of the scaled-gradient estimate
/// over `batches` independent batches of `n` positives and `n` negatives.
pub fn gradient_variance(
    alpha: ArrayView1<'_, f64>,
    target: ArrayView1<'_, f64>,
    m: f64,
    n: usize,
    batches: usize,
    seed: u64,
) -> Result<f64> {
    check_dim(target.len(), alpha.len())?;
    if batches < 2 || n == 0 {
        return Err(Error::invalid("gradient_variance needs n >= 1 and batches >= 2"));
    }
    let model = GaussianLocationModel::new(alpha.to_owned())?;
    let d = alpha.len();
    let mut stream = rng::derive(seed, &[0x7661_72]);
    let mut grads = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut pos = rng::standard_normal(&mut stream, n, d);
        pos += &target;
        let neg = rng::standard_normal(&mut stream, n, d);
        grads.push(n2ce_gradient(&model, pos.view(), neg.view(), m)?.vector);
    }
    Ok((0..d)
        .map(|k| {
            let coord: Vec<f64> = grads.iter().map(|g| g[k]).collect();
            mean_std(&coord).1.powi(2)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_grids() {
        let a = array![0.0];
        assert!(gradient_error_vs_m(a.view(), a.view(), &[], 10, 2, 0).is_err());
        assert!(gradient_error_vs_m(a.view(), a.view(), &[10.0, 5.0], 10, 2, 0).is_err());
    }

    #[test]
    fn error_at_optimum_is_sampling_noise() {
        let a = array![1.5, -0.8];
        let rows = gradient_error_vs_m(a.view(), a.view(), &[10.0, 100.0], 100_000, 4, 9).unwrap();
        for r in &rows {
            assert!(r.mean < 0.05, "{r:?}");
        }
    }

    #[test]
    fn population_gradient_vanishes_at_optimum_and_approaches_mle() {
        let a = array![1.5, -0.8];
        let g = population_n2ce_gradient(a.view(), a.view(), 10.0).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9));
        let a0 = array![-2.0, 1.0];
        let g = population_n2ce_gradient(a0.view(), a.view(), 1e9).unwrap();
        let mle = &a - &a0;
        assert!((&g - &mle).iter().all(|v| v.abs() < 1e-6), "{g}");
        assert!(population_n2ce_gradient(array![0.0, 0.0, 0.0].view(), array![0.0, 0.0, 0.0].view(), 1.0).is_err());
    }

    #[test]
    fn variance_is_positive() {
        let a = array![0.0];
        let v = gradient_variance(a.view(), a.view(), 1.0, 10, 50, 0).unwrap();
        assert!(v > 0.0);
    }
}
