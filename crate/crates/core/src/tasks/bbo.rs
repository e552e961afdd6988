use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::branin::{clip_to_domain, BraninTask};
use super::energy::{conditional_logdensity_grad, ConditionalEnergy};
use crate::models::{AdamConfig, AdamState, MlpConfig, MlpRatioModel};
use crate::samplers::{langevin_run, svgd_run, LangevinConfig, SvgdConfig};
use crate::telescoping::{
    fit_telescoping, telescoping_input_grad, telescoping_log_ratio, SchedulePreset, SigmaSchedule, TelescopeConfig,
};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Svgd,
    Langevin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressorConfig {
    pub hidden_width: usize,
    pub num_resblocks: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Fraction of the dataset held out to check the fit.
    pub holdout_fraction: f64,
    /// Held-out RMSE (on normalized targets) above which the run is refused.
    pub rmse_gate: Option<f64>,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            hidden_width: 32,
            num_resblocks: 2,
            iterations: 400,
            learning_rate: 3e-3,
            holdout_fraction: 0.1,
            rmse_gate: Some(0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BboConfig {
    pub noise_magnitude: f64,
    pub sampler: SamplerKind,
    /// Query budget `Q`: number of particles, each evaluated once.
    pub queries: usize,
    /// Fraction of best dataset points the prior is fitted to.
    pub top_quantile: f64,
    pub schedule: SchedulePreset,
    pub prior_hidden_width: usize,
    pub prior: TelescopeConfig,
    pub regressor: RegressorConfig,
    pub lambda1: f64,
    pub lambda2: f64,
    pub svgd: SvgdConfig,
    pub langevin: LangevinConfig,
    pub seed: u64,
}

impl Default for BboConfig {
    fn default() -> Self {
        Self {
            noise_magnitude: 100.0,
            sampler: SamplerKind::Svgd,
            queries: 128,
            top_quantile: 0.1,
            schedule: SchedulePreset::K6,
            prior_hidden_width: 32,
            prior: TelescopeConfig { iterations: 600, batch_size: 32, stage_weights: true, ..TelescopeConfig::default() },
            regressor: RegressorConfig::default(),
            lambda1: 20.0,
            lambda2: 1.0,
            svgd: SvgdConfig::default(),
            langevin: LangevinConfig::default(),
            seed: 0,
        }
    }
}

impl BboConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queries == 0 {
            return Err(Error::invalid("query budget must be >= 1"));
        }
        if !(self.top_quantile > 0.0 && self.top_quantile <= 1.0) {
            return Err(Error::invalid("top_quantile must be in (0, 1]"));
        }
        if !(self.regressor.holdout_fraction >= 0.0 && self.regressor.holdout_fraction < 1.0) {
            return Err(Error::invalid("holdout_fraction must be in [0, 1)"));
        }
        self.prior.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BboResult {
    pub best_value: f64,
    pub best_x: [f64; 2],
    /// Final particles mapped back to the design box, one per query.
    pub candidates: Array2<f64>,
    pub values: Vec<f64>,
    pub queries_used: usize,
    pub regressor_rmse: f64,
    pub y_max_dataset: f64,
}

/// Per-coordinate affine map between designs and latents.
#[derive(Debug, Clone, PartialEq)]
struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardizer {
    fn fit(xs: ArrayView2<'_, f64>) -> Self {
        let mean = xs.mean_axis(Axis(0)).expect("nonempty");
        let scale = xs.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        Self { mean, scale }
    }

    fn forward(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        (&xs - &self.mean) / &self.scale
    }

    fn inverse(&self, zs: ArrayView2<'_, f64>) -> Array2<f64> {
        &zs * &self.scale + &self.mean
    }
}

/// Fits `g` by full-batch Adam on squared loss. Returns the model and the
/// RMSE on the held-out rows (training RMSE if nothing is held out).
pub fn fit_regressor(xs: ArrayView2<'_, f64>, ys: &Array1<f64>, config: &RegressorConfig, seed: u64) -> Result<(MlpRatioModel, f64)> {
    let n = xs.nrows();
    let mut stream = rng::derive(seed, &[0x7265_6772]);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream);
    let held = ((n as f64) * config.holdout_fraction).floor() as usize;
    let (test_idx, train_idx) = order.split_at(held);
    let (xtr, ytr) = (xs.select(Axis(0), train_idx), ys.select(Axis(0), train_idx));
    let cfg = MlpConfig { input_dim: xs.ncols(), hidden_width: config.hidden_width, num_resblocks: config.num_resblocks, num_stages: 1 };
    let mut model = MlpRatioModel::init(cfg, &mut stream)?;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.learning_rate), model.num_params())?;
    let m = xtr.nrows() as f64;
    for it in 0..config.iterations {
        let (_, grad) = model.forward_with_pullback(xtr.view(), 0, &mut |pred| (&pred - &ytr) * (2.0 / m))?;
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: it, what: "regressor gradient".into() });
        }
        adam.step(model.params_mut(), grad.view(), false)?;
    }
    let (xe, ye) = if held > 0 { (xs.select(Axis(0), test_idx), ys.select(Axis(0), test_idx)) } else { (xtr, ytr) };
    let pred = model.forward_batch(xe.view(), 0)?;
    let rmse = ((&pred - &ye).mapv(|v| v * v).sum() / ye.len() as f64).sqrt();
    Ok((model, rmse))
}

/// Offline optimization on the Branin task with the design box used as the
/// latent space. Only the final `Q` particles are evaluated.
pub fn bbo_run(task: &BraninTask, config: &BboConfig) -> Result<BboResult> {
    config.validate()?;
    let seed = config.seed;

    // Prior over the best designs, in standardized coordinates.
    let mut order: Vec<usize> = (0..task.len()).collect();
    order.sort_by(|&a, &b| task.ys[b].total_cmp(&task.ys[a]));
    let top = ((task.len() as f64 * config.top_quantile).ceil() as usize).max(2).min(task.len());
    let top_x = task.xs.select(Axis(0), &order[..top]);
    let standard = Standardizer::fit(top_x.view());
    let latents = standard.forward(top_x.view());

    let schedule = SigmaSchedule::preset(config.schedule);
    let prior_cfg = MlpConfig { input_dim: 2, hidden_width: config.prior_hidden_width, num_resblocks: 3, num_stages: schedule.num_stages() };
    let prior_init = MlpRatioModel::init(prior_cfg, &mut rng::derive(seed, &[1]))?;
    let telescope = TelescopeConfig { noise_magnitude: config.noise_magnitude, seed: rng::derive_seed(seed, &[2]), ..config.prior.clone() };
    let sampler = |n: usize, s: &mut rng::Stream| -> Result<Array2<f64>> {
        let idx: Vec<usize> = (0..n).map(|_| s.random_range(0..latents.nrows())).collect();
        Ok(latents.select(Axis(0), &idx))
    };
    let prior = fit_telescoping(sampler, &schedule, prior_init, &telescope)?.model;

    // Regressor on normalized labels over the whole dataset.
    let y_min = task.ys.iter().copied().fold(f64::INFINITY, f64::min);
    let span = (task.y_max - y_min).max(f64::MIN_POSITIVE);
    let y_norm = task.ys.mapv(|y| (y - y_min) / span);
    let (regressor, rmse) = fit_regressor(standard.forward(task.xs.view()).view(), &y_norm, &config.regressor, rng::derive_seed(seed, &[3]))?;
    if let Some(gate) = config.regressor.rmse_gate {
        if rmse > gate {
            return Err(Error::invalid(format!("regressor held-out RMSE {rmse:.4} exceeds gate {gate}")));
        }
    }

    let mut energy = ConditionalEnergy::new(
        1.0,
        Box::new(|zs| regressor.forward_batch(zs, 0)),
        Box::new(|zs| telescoping_log_ratio(&prior, zs)),
    );
    energy.lambda1 = config.lambda1;
    energy.lambda2 = config.lambda2;
    energy.predictor_grad = Some(Box::new(|zs| Ok(regressor.input_grad_batch(zs, 0)?.1)));
    energy.prior_grad = Some(Box::new(|zs| Ok(telescoping_input_grad(&prior, zs)?.1)));
    let score = |zs: ArrayView2<'_, f64>| Ok(conditional_logdensity_grad(&energy, zs)?.0);

    let init = rng::standard_normal(&mut rng::derive(seed, &[4]), config.queries, 2);
    let particles = match config.sampler {
        SamplerKind::Svgd => svgd_run(score, init.view(), &config.svgd)?.0,
        SamplerKind::Langevin => {
            let ld = LangevinConfig { seed: rng::derive_seed(seed, &[5]), ..config.langevin.clone() };
            langevin_run(score, init.view(), &ld)?
        }
    };

    let mut candidates = standard.inverse(particles.view());
    let before = task.query_count();
    let mut values = Vec::with_capacity(config.queries);
    for mut row in candidates.rows_mut() {
        let x = clip_to_domain([row[0], row[1]]);
        row.assign(&ndarray::aview1(&x));
        values.push(task.query(x));
    }
    let used = task.query_count() - before;
    if used > config.queries {
        return Err(Error::invalid(format!("query budget exceeded: {used} > {}", config.queries)));
    }
    let best = (0..values.len()).max_by(|&a, &b| values[a].total_cmp(&values[b])).expect("Q >= 1");
    Ok(BboResult {
        best_value: values[best],
        best_x: [candidates[[best, 0]], candidates[[best, 1]]],
        candidates: candidates.slice(s![.., ..]).to_owned(),
        values,
        queries_used: used,
        regressor_rmse: rmse,
        y_max_dataset: task.y_max,
    })
}
