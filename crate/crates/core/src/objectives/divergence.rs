//! The interpolating divergence bounded by the scaled objective, plus
//! quadrature oracles for unit-variance Gaussians.
//!
//! With `m = (q* + M q0) / (1 + M)` the divergence used here is
//! `D_M = KL(q* ‖ m) + M · KL(q0 ‖ m)`. For any ratio model,
//! `D_M ≥ c(M) + L_M(r)` with equality at `r = q*/q0`, where
//! `c(M) = (1 + M) · h(M / (1 + M))`. At `M = 1` this is the sum of the two
//! Jensen-Shannon KL terms; as `M → ∞` it tends to `KL(q* ‖ q0)`.

use ndarray::{ArrayView1, ArrayView2};

use super::estimators::n2ce_terms;
use crate::error::check_dim;
use crate::models::RatioModel;
use crate::{Error, Result};

/// Monte-Carlo value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Binary entropy in nats. Rejects `a` outside `(0, 1)`.
pub fn binary_entropy(a: f64) -> Result<f64> {
    binary_entropy_with_endpoints(a, false)
}

/// Binary entropy; with `allow_endpoints` the limits `h(0) = h(1) = 0` are
/// returned instead of an error.
pub fn binary_entropy_with_endpoints(a: f64, allow_endpoints: bool) -> Result<f64> {
    if allow_endpoints && (a == 0.0 || a == 1.0) {
        return Ok(0.0);
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::invalid(format!("binary entropy needs 0 < a < 1, got {a}")));
    }
    Ok(-a * a.ln() - (1.0 - a) * (-a).ln_1p())
}

/// `c(M) = (1 + M) h(M/(1+M)) = ln(1 + M) + M ln(1 + 1/M)`, the constant that
/// turns the scaled objective into a bound on `D_M`.
pub fn divergence_offset(m: f64) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid(format!("noise magnitude must be positive and finite, got {m}")));
    }
    Ok(m.ln_1p() + m * (1.0 / m).ln_1p())
}

/// KL between unit-covariance Gaussians: `‖μ1 − μ0‖² / 2`.
pub fn gaussian_kl(mean1: ArrayView1<'_, f64>, mean0: ArrayView1<'_, f64>) -> Result<f64> {
    check_dim(mean1.len(), mean0.len())?;
    let d = &mean1 - &mean0;
    Ok(0.5 * d.dot(&d))
}

/// `c(M) + L_M(r)` on the given samples.
pub fn d_alpha_variational_value<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    m: f64,
) -> Result<f64> {
    Ok(d_alpha_variational_estimate(model, pos, neg, m)?.value)
}

/// [`d_alpha_variational_value`] with the standard error of the two
/// independent sample means.
pub fn d_alpha_variational_estimate<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    m: f64,
) -> Result<DivergenceEstimate> {
    let (tp, tn) = n2ce_terms(model, pos, neg, m)?;
    let c = divergence_offset(m)?;
    let (mp, vp) = mean_var(tp.iter().copied());
    let (mn, vn) = mean_var(tn.iter().copied());
    let value = c + mp + mn;
    let stderr = (vp / tp.len() as f64 + vn / tn.len() as f64).sqrt();
    if !value.is_finite() {
        return Err(Error::NonFiniteEstimate("divergence estimate".into()));
    }
    Ok(DivergenceEstimate { value, stderr })
}

fn mean_var(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    // Welford
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for x in xs {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
    (mean, var)
}

struct GaussPair {
    delta: Vec<f64>,
    shift: f64,
    mean1: Vec<f64>,
    mean0: Vec<f64>,
}

impl GaussPair {
    fn new(mean1: ArrayView1<'_, f64>, mean0: ArrayView1<'_, f64>) -> Result<Self> {
        check_dim(mean1.len(), mean0.len())?;
        if mean1.len() > 2 {
            return Err(Error::UnsupportedDimension(mean1.len()));
        }
        if mean1.is_empty() {
            return Err(Error::invalid("means must be nonempty"));
        }
        let delta: Vec<f64> = mean1.iter().zip(mean0.iter()).map(|(a, b)| a - b).collect();
        let shift = 0.5 * (mean1.dot(&mean1) - mean0.dot(&mean0));
        Ok(GaussPair { delta, shift, mean1: mean1.to_vec(), mean0: mean0.to_vec() })
    }

    fn dim(&self) -> usize {
        self.delta.len()
    }

    fn log_ratio(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.delta).map(|(a, b)| a * b).sum::<f64>() - self.shift
    }

    fn density(mean: &[f64], x: &[f64]) -> f64 {
        let d = mean.len() as f64;
        let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
        (-0.5 * sq).exp() / (2.0 * std::f64::consts::PI).powf(0.5 * d)
    }

    /// Integration box: ten standard deviations past both means per axis.
    fn bounds(&self, axis: usize) -> (f64, f64) {
        let (a, b) = (self.mean1[axis], self.mean0[axis]);
        (a.min(b) - 10.0, a.max(b) + 10.0)
    }
}

/// Tensor trapezoid rule over the box, halving the step until two successive
/// estimates agree to `tol`.
fn adaptive_trapezoid(pair: &GaussPair, tol: f64, integrand: impl Fn(&[f64]) -> f64) -> f64 {
    let bounds: Vec<(f64, f64)> = (0..pair.dim()).map(|k| pair.bounds(k)).collect();
    let mut cells = 64usize;
    let mut prev = f64::NAN;
    loop {
        let est = tensor_trapezoid(&bounds, cells, &integrand);
        if (est - prev).abs() <= tol || cells >= 4096 {
            return est;
        }
        prev = est;
        cells *= 2;
    }
}

fn tensor_trapezoid(bounds: &[(f64, f64)], cells: usize, integrand: &impl Fn(&[f64]) -> f64) -> f64 {
    let weight = |i: usize| if i == 0 || i == cells { 0.5 } else { 1.0 };
    let step: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo) / cells as f64).collect();
    let vol: f64 = step.iter().product();
    let mut total = 0.0;
    match bounds.len() {
        1 => {
            for i in 0..=cells {
                total += weight(i) * integrand(&[bounds[0].0 + i as f64 * step[0]]);
            }
        }
        _ => {
            for i in 0..=cells {
                let x = bounds[0].0 + i as f64 * step[0];
                let mut row = 0.0;
                for j in 0..=cells {
                    row += weight(j) * integrand(&[x, bounds[1].0 + j as f64 * step[1]]);
                }
                total += weight(i) * row;
            }
        }
    }
    total * vol
}

/// `D_M` between `N(mean1, I)` and `N(mean0, I)` by quadrature, for
/// dimension at most two.
pub fn d_alpha_quadrature_oracle(mean1: ArrayView1<'_, f64>, mean0: ArrayView1<'_, f64>, m: f64) -> Result<f64> {
    divergence_offset(m)?;
    let pair = GaussPair::new(mean1, mean0)?;
    let inv_m_term = (1.0 / m).ln_1p();
    let value = adaptive_trapezoid(&pair, 1e-9, |x| {
        let f = pair.log_ratio(x);
        // ln1p(r/M) without overflowing r
        let lp = super::softplus(f - m.ln());
        let q1 = GaussPair::density(&pair.mean1, x);
        let q0 = GaussPair::density(&pair.mean0, x);
        q1 * (f - lp + inv_m_term) + m * q0 * (inv_m_term - lp)
    });
    Ok(value)
}

/// `KL(p ‖ (p+q)/2) + KL(q ‖ (p+q)/2)` straight from the densities, by
/// adaptive Simpson in 1-D and nested adaptive Simpson in 2-D.
pub fn js_divergence_direct(mean1: ArrayView1<'_, f64>, mean0: ArrayView1<'_, f64>) -> Result<f64> {
    let pair = GaussPair::new(mean1, mean0)?;
    let term = |x: &[f64]| {
        let p = GaussPair::density(&pair.mean1, x);
        let q = GaussPair::density(&pair.mean0, x);
        let s = p + q;
        let mut v = 0.0;
        if p > 0.0 {
            v += p * (2.0 * p / s).ln();
        }
        if q > 0.0 {
            v += q * (2.0 * q / s).ln();
        }
        v
    };
    let (a0, b0) = pair.bounds(0);
    Ok(match pair.dim() {
        1 => adaptive_simpson(&|x| term(&[x]), a0, b0, 1e-10),
        _ => {
            let (a1, b1) = pair.bounds(1);
            adaptive_simpson(&|x| adaptive_simpson(&|y| term(&[x, y]), a1, b1, 1e-11), a0, b0, 1e-10)
        }
    })
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // Start from a few panels so narrow peaks are not skipped.
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (flo, fhi, fmid) = (f(lo), f(hi), f(0.5 * (lo + hi)));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            simpson_step(f, lo, hi, flo, fmid, fhi, whole, tol / panels as f64, 40)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sample_gaussian_location, GaussianLocationModel};
    use crate::rng;
    use ndarray::{array, Array1};

    #[test]
    fn entropy_examples() {
        assert!((binary_entropy(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        for eps in [0.1, 0.3, 0.49] {
            let (a, b) = (binary_entropy(0.5 + eps).unwrap(), binary_entropy(0.5 - eps).unwrap());
            assert!((a - b).abs() < 1e-15);
        }
        let a = 100.0f64 / 101.0;
        let direct = -a * a.ln() - (1.0 - a) * (1.0 - a).ln();
        assert!((binary_entropy(a).unwrap() - direct).abs() < 1e-15);
        assert!((binary_entropy(a).unwrap() - 0.0555461).abs() < 1e-7);
        assert!(binary_entropy(0.0).is_err());
        assert!(binary_entropy(1.2).is_err());
        assert_eq!(binary_entropy_with_endpoints(1.0, true).unwrap(), 0.0);
        assert!(binary_entropy_with_endpoints(1.5, true).is_err());
    }

    #[test]
    fn offset_is_scaled_entropy() {
        for m in [0.5, 1.0, 3.0, 100.0] {
            let a = m / (1.0 + m);
            let c = divergence_offset(m).unwrap();
            assert!((c - (1.0 + m) * binary_entropy(a).unwrap()).abs() < 1e-12);
        }
        assert!((divergence_offset(1.0).unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn quadrature_identical_means_is_zero() {
        for m in [1.0, 10.0, 1e9] {
            let v = d_alpha_quadrature_oracle(array![0.3].view(), array![0.3].view(), m).unwrap();
            assert!(v.abs() < 1e-9, "{m}: {v}");
            let v = d_alpha_quadrature_oracle(array![0.3, -1.0].view(), array![0.3, -1.0].view(), m).unwrap();
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_limits() {
        let v = d_alpha_quadrature_oracle(array![1.0].view(), array![0.0].view(), 1e9).unwrap();
        assert!((v - 0.5).abs() < 1e-6, "{v}");
        let a = d_alpha_quadrature_oracle(array![1.0].view(), array![0.0].view(), 1.0).unwrap();
        let b = js_divergence_direct(array![1.0].view(), array![0.0].view()).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} {b}");
        let a = d_alpha_quadrature_oracle(array![1.0, 0.5].view(), array![0.0, 0.0].view(), 1.0).unwrap();
        let b = js_divergence_direct(array![1.0, 0.5].view(), array![0.0, 0.0].view()).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} {b}");
        let v = d_alpha_quadrature_oracle(array![1.0, 0.5].view(), array![0.0, 0.0].view(), 1e9).unwrap();
        assert!((v - 0.625).abs() < 1e-6);
    }

    #[test]
    fn quadrature_rejects_high_dimension() {
        let z = Array1::<f64>::zeros(3);
        assert!(matches!(d_alpha_quadrature_oracle(z.view(), z.view(), 1.0), Err(Error::UnsupportedDimension(3))));
    }

    #[test]
    fn divergence_increases_with_m() {
        let mut prev = 0.0;
        for m in [0.1, 1.0, 10.0, 100.0] {
            let v = d_alpha_quadrature_oracle(array![1.0].view(), array![0.0].view(), m).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn variational_value_is_tight_at_true_ratio() {
        let model = GaussianLocationModel::from_slice(&[1.0]).unwrap();
        let n = 100_000;
        let pos = sample_gaussian_location(array![1.0].view(), n, &mut rng::seeded(21)).unwrap();
        let neg = sample_gaussian_location(array![0.0].view(), n, &mut rng::seeded(22)).unwrap();
        for m in [1.0, 1e9] {
            let est = d_alpha_variational_estimate(&model, pos.view(), neg.view(), m).unwrap();
            let truth = d_alpha_quadrature_oracle(array![1.0].view(), array![0.0].view(), m).unwrap();
            assert!((est.value - truth).abs() <= 3.0 * est.stderr, "M={m}: {} vs {truth} ± {}", est.value, est.stderr);
        }
    }

    #[test]
    fn variational_value_is_a_lower_bound_off_optimum() {
        let truth = d_alpha_quadrature_oracle(array![1.0].view(), array![0.0].view(), 1.0).unwrap();
        let n = 100_000;
        let pos = sample_gaussian_location(array![1.0].view(), n, &mut rng::seeded(23)).unwrap();
        let neg = sample_gaussian_location(array![0.0].view(), n, &mut rng::seeded(24)).unwrap();
        for a in [0.0, 0.4, 2.0] {
            let model = GaussianLocationModel::from_slice(&[a]).unwrap();
            let est = d_alpha_variational_estimate(&model, pos.view(), neg.view(), 1.0).unwrap();
            assert!(est.value <= truth + 3.0 * est.stderr);
        }
        // r ≡ 1 on identical distributions gives exactly zero.
        let model = GaussianLocationModel::from_slice(&[0.0]).unwrap();
        let v = d_alpha_variational_value(&model, neg.view(), neg.view(), 1.0).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn kl_closed_form() {
        assert_eq!(gaussian_kl(array![1.0].view(), array![0.0].view()).unwrap(), 0.5);
        assert!(gaussian_kl(array![1.0].view(), array![0.0, 0.0].view()).is_err());
    }
}
