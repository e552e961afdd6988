use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{interpolate_stage, SigmaSchedule, StageWeights};
use crate::models::{AdamConfig, AdamState, MlpRatioModel};
use crate::objectives::{sigmoid, softplus};
use crate::{rng, Error, Result};

/// Most negatives a single update may use under the scaled convention.
pub const MAX_NEGATIVES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleConvention {
    /// As many negatives as positives.
    Symmetric,
    /// `M` times as many negatives as positives, capped at [`MAX_NEGATIVES`].
    ScaledNegatives,
}

impl SampleConvention {
    pub fn negatives(&self, n_pos: usize, m: f64) -> usize {
        match self {
            SampleConvention::Symmetric => n_pos,
            SampleConvention::ScaledNegatives => ((m * n_pos as f64).round() as usize).clamp(n_pos, MAX_NEGATIVES),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TelescopeConfig {
    pub noise_magnitude: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub stage_weights: bool,
    pub convention: SampleConvention,
    /// Negatives reuse the positives' `(z0, z_top)` pairs.
    pub coupled: bool,
    /// Weight of the `mean(f̃²)` penalty.
    pub ratio_penalty: f64,
    /// Rescale gradients whose norm exceeds this value.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TelescopeConfig {
    fn default() -> Self {
        Self {
            noise_magnitude: 100.0,
            iterations: 2000,
            batch_size: 64,
            adam: AdamConfig::with_lr(1e-3),
            stage_weights: false,
            convention: SampleConvention::ScaledNegatives,
            coupled: true,
            ratio_penalty: 0.0,
            grad_clip: Some(100.0),
            seed: 0,
        }
    }
}

impl TelescopeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_magnitude >= 1.0 && self.noise_magnitude.is_finite()) {
            return Err(Error::invalid(format!("noise_magnitude must be >= 1, got {}", self.noise_magnitude)));
        }
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::invalid("iterations and batch_size must be positive"));
        }
        if !(self.ratio_penalty >= 0.0) {
            return Err(Error::invalid("ratio_penalty must be nonnegative"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::invalid("grad_clip must be positive"));
            }
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelescopeFit {
    pub model: MlpRatioModel,
    /// Stage objective (before weighting) at each iteration.
    pub loss_trace: Vec<f64>,
    /// Stage drawn at each iteration.
    pub stages: Vec<usize>,
}

/// `Σ_k f̃(z, k)` for each row of `zs`: the telescoped log-ratio.
pub fn telescoping_log_ratio(model: &MlpRatioModel, zs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let mut total = Array1::zeros(zs.nrows());
    for k in 0..model.config().num_stages {
        total += &model.forward_batch(zs, k)?;
    }
    Ok(total)
}

/// `(Σf̃, Σ∇_z f̃)` for each row of `zs`.
pub fn telescoping_input_grad(model: &MlpRatioModel, zs: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let mut total = Array1::zeros(zs.nrows());
    let mut grad = Array2::zeros(zs.raw_dim());
    for k in 0..model.config().num_stages {
        let (f, g) = model.input_grad_batch(zs, k)?;
        total += &f;
        grad += &g;
    }
    Ok((total, grad))
}

/// Objective and parameter gradient for one stage, in classifier form with
/// the optional ratio penalty.
pub fn stage_objective_and_gradient(
    model: &MlpRatioModel,
    pos: ArrayView2<'_, f64>,
    neg: ArrayView2<'_, f64>,
    stage: usize,
    m: f64,
    penalty: f64,
) -> Result<(f64, Array1<f64>)> {
    if pos.nrows() == 0 || neg.nrows() == 0 {
        return Err(Error::invalid("positive and negative sample sets must be nonempty"));
    }
    let log_m = m.ln();
    let (np, nn) = (pos.nrows() as f64, neg.nrows() as f64);
    let pen = 2.0 * penalty / (np + nn);
    let (fp, gp) = model.forward_with_pullback(pos, stage, &mut |f: ArrayView1<'_, f64>| {
        f.mapv(|f| (1.0 - sigmoid(f - log_m)) / np - pen * f)
    })?;
    let (fn_, gn) = model.forward_with_pullback(neg, stage, &mut |f: ArrayView1<'_, f64>| {
        f.mapv(|f| -m * sigmoid(f - log_m) / nn - pen * f)
    })?;
    let mut value = -fp.mapv(|f| softplus(log_m - f)).sum() / np - m * fn_.mapv(|f| softplus(f - log_m)).sum() / nn;
    if penalty != 0.0 {
        value -= penalty * (fp.dot(&fp) + fn_.dot(&fn_)) / (np + nn);
    }
    Ok((value, gp + gn))
}

/// Trains the shared stage network against a fixed target.
///
/// Each iteration draws one stage `k` uniformly. Positives are `z_{k+1}`
/// (the raw target when `k = K`) and negatives are `z_k`, both built by
/// [`interpolate_stage`] from standard-normal `z0` and target draws.
pub fn fit_telescoping<F>(
    mut target_sampler: F,
    schedule: &SigmaSchedule,
    mut model: MlpRatioModel,
    config: &TelescopeConfig,
) -> Result<TelescopeFit>
where
    F: FnMut(usize, &mut rng::Stream) -> Result<Array2<f64>>,
{
    config.validate()?;
    if model.config().num_stages != schedule.num_stages() {
        return Err(Error::invalid(format!(
            "model has {} stages but the schedule has {}",
            model.config().num_stages,
            schedule.num_stages()
        )));
    }
    let d = model.config().input_dim;
    let m = config.noise_magnitude;
    let weights = if config.stage_weights {
        StageWeights::new(schedule)
    } else {
        StageWeights::uniform(schedule.num_stages())
    };
    let n_pos = config.batch_size;
    let n_neg = config.convention.negatives(n_pos, m);
    let mut adam = AdamState::new(config.adam, model.num_params())?;
    let mut stream = rng::derive(config.seed, &[0x7465_6c65]);
    let mut fit = TelescopeFit { model: model.clone(), loss_trace: Vec::new(), stages: Vec::new() };

    let mut draw_pairs = |count: usize, stream: &mut rng::Stream| -> Result<(Array2<f64>, Array2<f64>)> {
        let top = target_sampler(count, stream)?;
        if top.nrows() != count || top.ncols() != d {
            return Err(Error::invalid(format!(
                "target sampler returned {}x{}, expected {count}x{d}",
                top.nrows(),
                top.ncols()
            )));
        }
        let z0 = rng::standard_normal(stream, count, d);
        Ok((z0, top))
    };

    for it in 0..config.iterations {
        let k = stream.random_range(0..schedule.num_stages());
        let (sig_lo, sig_hi) = (schedule.sigma(k)?, schedule.sigma(k + 1)?);
        let (pos, neg) = if config.coupled {
            let (z0, top) = draw_pairs(n_pos.max(n_neg), &mut stream)?;
            let pos = interpolate_stage(z0.slice(s![..n_pos, ..]), top.slice(s![..n_pos, ..]), sig_hi)?;
            let neg = interpolate_stage(z0.slice(s![..n_neg, ..]), top.slice(s![..n_neg, ..]), sig_lo)?;
            (pos, neg)
        } else {
            let (z0, top) = draw_pairs(n_pos, &mut stream)?;
            let pos = interpolate_stage(z0.view(), top.view(), sig_hi)?;
            let (z0, top) = draw_pairs(n_neg, &mut stream)?;
            let neg = interpolate_stage(z0.view(), top.view(), sig_lo)?;
            (pos, neg)
        };
        let (value, mut grad) = stage_objective_and_gradient(&model, pos.view(), neg.view(), k, m, config.ratio_penalty)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { step: it, what: format!("telescoping stage {k} objective") });
        }
        grad *= weights.w[k];
        if let Some(clip) = config.grad_clip {
            let norm = grad.dot(&grad).sqrt();
            if norm > clip {
                grad *= clip / norm;
            }
        }
        adam.step(model.params_mut(), grad.view(), true)?;
        fit.loss_trace.push(value);
        fit.stages.push(k);
    }
    fit.model = model;
    Ok(fit)
}
