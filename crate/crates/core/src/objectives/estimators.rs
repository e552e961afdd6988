use ndarray::{Array1, ArrayView1, ArrayView2};

use super::{sigmoid, softplus, GradEstimate, ObjectiveKind};
use crate::error::check_dim;
use crate::models::{GaussianLocationModel, MlpRatioModel, RatioModel};
use crate::{Error, Result};

/// Largest log-ratio the NWJ estimator exponentiates by default.
pub const DEFAULT_NWJ_CAP: f64 = 30.0;

fn check_samples<R: RatioModel + ?Sized>(model: &R, pos: &ArrayView2<'_, f64>, neg: &ArrayView2<'_, f64>) -> Result<()> {
    if pos.nrows() == 0 || neg.nrows() == 0 {
        return Err(Error::invalid("positive and negative sample sets must be nonempty"));
    }
    check_dim(model.input_dim(), pos.ncols())?;
    check_dim(model.input_dim(), neg.ncols())
}

fn check_m(m: f64) -> Result<f64> {
    if m > 0.0 && m.is_finite() {
        Ok(m.ln())
    } else {
        Err(Error::invalid(format!("noise magnitude must be positive and finite, got {m}")))
    }
}

/// `M / (M + r)`, the weight the scaled objective puts on `∇ log r` at a
/// positive sample. Its complement `r / (M + r)` is the classifier output.
pub fn weight_fn(m: f64, r: f64) -> Result<f64> {
    if !(m > 0.0) || !(r > 0.0) {
        return Err(Error::invalid(format!("weight_fn needs M > 0 and r > 0, got M={m}, r={r}")));
    }
    Ok(m / (m + r))
}

fn mean(v: &Array1<f64>) -> f64 {
    v.sum() / v.len() as f64
}

/// Per-sample terms of the scaled objective: `log(r/(M+r))` on positives and
/// `M log(M/(M+r))` on negatives (the factor `M` included).
pub fn n2ce_terms<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    m: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    check_samples(model, &pos, &neg)?;
    let log_m = check_m(m)?;
    let fp = model.log_ratio(pos)?;
    let fn_ = model.log_ratio(neg)?;
    Ok((fp.mapv(|f| -softplus(log_m - f)), fn_.mapv(|f| -m * softplus(f - log_m))))
}

/// Plain logistic NCE objective, written independently of the scaled form.
pub fn nce_objective<R: RatioModel + ?Sized>(model: &R, pos: ArrayView2<'_, f64>, neg: ArrayView2<'_, f64>) -> Result<f64> {
    check_samples(model, &pos, &neg)?;
    // log(r/(1+r)) = −softplus(−f), log(1/(1+r)) = −softplus(f)
    let fp = model.log_ratio(pos)?;
    let fn_ = model.log_ratio(neg)?;
    Ok(-mean(&fp.mapv(|f| softplus(-f))) - mean(&fn_.mapv(softplus)))
}

pub fn n2ce_objective<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    m: f64,
) -> Result<f64> {
    n2ce_objective_regularized(model, pos, neg, m, 0.0)
}

/// Scaled objective minus `penalty · mean(f²)` over both sample sets.
pub fn n2ce_objective_regularized<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    m: f64,
    penalty: f64,
) -> Result<f64> {
    let (tp, tn) = n2ce_terms(model, pos, neg, m)?;
    let mut value = mean(&tp) + mean(&tn);
    if penalty != 0.0 {
        let fp = model.log_ratio(pos)?;
        let fn_ = model.log_ratio(neg)?;
        let total = (fp.len() + fn_.len()) as f64;
        value -= penalty * (fp.dot(&fp) + fn_.dot(&fn_)) / total;
    }
    Ok(value)
}

/// Exact gradient of the empirical scaled objective:
/// `mean_pos[(M/(M+r)) ∇f] − M · mean_neg[(r/(M+r)) ∇f]`.
pub fn n2ce_gradient<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    m: f64,
) -> Result<GradEstimate> {
    n2ce_gradient_regularized(model, pos, neg, m, 0.0)
}

pub fn n2ce_gradient_regularized<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    m: f64,
    penalty: f64,
) -> Result<GradEstimate> {
    check_samples(model, &pos, &neg)?;
    let log_m = check_m(m)?;
    let (np, nn) = (pos.nrows() as f64, neg.nrows() as f64);
    let pen = 2.0 * penalty / (np + nn);
    let (_, gp) = model.log_ratio_with_pullback(pos, &mut |f: ArrayView1<'_, f64>| {
        f.mapv(|f| sigmoid(log_m - f) / np - pen * f)
    })?;
    let (_, gn) = model.log_ratio_with_pullback(neg, &mut |f: ArrayView1<'_, f64>| {
        f.mapv(|f| -m * sigmoid(f - log_m) / nn - pen * f)
    })?;
    GradEstimate::new(gp + gn, pos.nrows(), neg.nrows())
}

fn check_cap(fn_: &Array1<f64>, cap: f64) -> Result<()> {
    match fn_.iter().copied().find(|&f| !(f <= cap)) {
        Some(value) => Err(Error::NumericRange { value, cap }),
        None => Ok(()),
    }
}

/// `mean_pos(log r) − mean_neg(r)`. Negative log-ratios above `cap` are an
/// error rather than being clipped.
pub fn nwj_objective<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    cap: f64,
) -> Result<f64> {
    check_samples(model, &pos, &neg)?;
    let fp = model.log_ratio(pos)?;
    let fn_ = model.log_ratio(neg)?;
    check_cap(&fn_, cap)?;
    Ok(mean(&fp) - mean(&fn_.mapv(f64::exp)))
}

/// `mean_pos(∇f) − mean_neg(r ∇f)`. With the true model family this is also
/// the importance-sampled maximum-likelihood gradient.
pub fn nwj_gradient<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    cap: f64,
) -> Result<GradEstimate> {
    check_samples(model, &pos, &neg)?;
    let (np, nn) = (pos.nrows() as f64, neg.nrows() as f64);
    let gp = model.pullback(pos, Array1::from_elem(pos.nrows(), 1.0 / np).view())?;
    let mut breach = None;
    let (_, gn) = model.log_ratio_with_pullback(neg, &mut |f: ArrayView1<'_, f64>| {
        if let Some(v) = f.iter().copied().find(|&v| !(v <= cap)) {
            breach = Some(v);
        }
        f.mapv(|v| -v.min(cap).exp() / nn)
    })?;
    if let Some(value) = breach {
        return Err(Error::NumericRange { value, cap });
    }
    GradEstimate::new(gp + gn, pos.nrows(), neg.nrows())
}

/// `mean_pos log(r/(1+r)) + M mean_neg log(M/(M+r))`: scaled weighting on the
/// negative term only.
pub fn neg_reweight_objective<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    m: f64,
) -> Result<f64> {
    check_samples(model, &pos, &neg)?;
    let log_m = check_m(m)?;
    let fp = model.log_ratio(pos)?;
    let fn_ = model.log_ratio(neg)?;
    Ok(-mean(&fp.mapv(|f| softplus(-f))) - m * mean(&fn_.mapv(|f| softplus(f - log_m))))
}

pub fn neg_reweight_gradient<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    m: f64,
) -> Result<GradEstimate> {
    check_samples(model, &pos, &neg)?;
    let log_m = check_m(m)?;
    let (np, nn) = (pos.nrows() as f64, neg.nrows() as f64);
    let (_, gp) = model.log_ratio_with_pullback(pos, &mut |f: ArrayView1<'_, f64>| f.mapv(|f| sigmoid(-f) / np))?;
    let (_, gn) = model.log_ratio_with_pullback(neg, &mut |f: ArrayView1<'_, f64>| {
        f.mapv(|f| -m * sigmoid(f - log_m) / nn)
    })?;
    GradEstimate::new(gp + gn, pos.nrows(), neg.nrows())
}

/// Population maximum-likelihood gradient for the Gaussian location family:
/// `E_q*[x] − E_pα[x] = α* − α`.
pub fn mle_gradient_oracle(model: &GaussianLocationModel, target_mean: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    check_dim(model.dim(), target_mean.len())?;
    Ok(&target_mean - &model.mean())
}

/// Classifier form of the scaled objective:
/// `mean_pos log σ(f − log M) + M mean_neg log(1 − σ(f − log M))`.
pub fn sigmoid_form_objective<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    m: f64,
) -> Result<f64> {
    check_samples(model, &pos, &neg)?;
    let log_m = check_m(m)?;
    let fp = model.log_ratio(pos)?;
    let fn_ = model.log_ratio(neg)?;
    // log σ(u) = −softplus(−u), log(1 − σ(u)) = −softplus(u)
    Ok(-mean(&fp.mapv(|f| softplus(log_m - f))) - m * mean(&fn_.mapv(|f| softplus(f - log_m))))
}

/// Gradient of [`sigmoid_form_objective`] by the chain rule through the
/// classifier output `s = σ(f − log M)`: `d log s / df = 1 − s` and
/// `d log(1 − s) / df = −s`.
pub fn sigmoid_form_gradient<R: RatioModel + ?Sized>(
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    m: f64,
) -> Result<GradEstimate> {
    check_samples(model, &pos, &neg)?;
    let log_m = check_m(m)?;
    let (np, nn) = (pos.nrows() as f64, neg.nrows() as f64);
    let (_, gp) = model.log_ratio_with_pullback(pos, &mut |f: ArrayView1<'_, f64>| {
        f.mapv(|f| {
            let s = sigmoid(f - log_m);
            (1.0 - s) / np
        })
    })?;
    let (_, gn) = model.log_ratio_with_pullback(neg, &mut |f: ArrayView1<'_, f64>| {
        f.mapv(|f| -m * sigmoid(f - log_m) / nn)
    })?;
    GradEstimate::new(gp + gn, pos.nrows(), neg.nrows())
}

/// Stage-`k` ratio update for a telescoped model: positives from `q_{k+1}`,
/// negatives from `q_k`.
pub fn sigmoid_form_stage_gradient(
    model: &MlpRatioModel,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    stage: usize,
    m: f64,
) -> Result<GradEstimate> {
    sigmoid_form_gradient(&model.at_stage(stage)?, pos, neg, m)
}

/// Gradient for any [`ObjectiveKind`] except [`ObjectiveKind::MleExact`],
/// which has no sample-based form.
pub fn estimator_gradient<R: RatioModel + ?Sized>(
    kind: ObjectiveKind,
    model: &R,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    nwj_cap: f64,
) -> Result<GradEstimate> {
    kind.validate()?;
    match kind {
        ObjectiveKind::Nce => n2ce_gradient(model, pos, neg, 1.0),
        ObjectiveKind::N2ce { noise_magnitude } => n2ce_gradient(model, pos, neg, noise_magnitude),
        ObjectiveKind::Nwj => nwj_gradient(model, pos, neg, nwj_cap),
        ObjectiveKind::NegReweight { noise_magnitude } => neg_reweight_gradient(model, pos, neg, noise_magnitude),
        ObjectiveKind::MleExact => Err(Error::invalid("MLE_EXACT has no sample-based gradient; use mle_gradient_oracle")),
    }
}
