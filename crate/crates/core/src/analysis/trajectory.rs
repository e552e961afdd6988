use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::models::GaussianLocationModel;
use crate::objectives::{estimator_gradient, mle_gradient_oracle, ObjectiveKind};
use crate::{rng, Error, Result};

/// Log-ratio cap used by the harness for NWJ steps. Large enough that only a
/// genuinely overflowing `exp` is refused.
pub const HARNESS_NWJ_CAP: f64 = 700.0;

/// Gradient ascent on the Gaussian location family with sample-based
/// gradients. Positives come from `N(target_mean, I)`, negatives from
/// `N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub target_mean: Vec<f64>,
    pub init_mean: Vec<f64>,
    pub estimator: ObjectiveKind,
    pub samples_per_iter: usize,
    pub step_size: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Feed every estimator the same standard-normal innovations for a seed.
    pub common_random_numbers: bool,
    pub nwj_cap: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self::two_d(ObjectiveKind::n2ce(1000.0))
    }
}

impl TrajectoryConfig {
    /// `α* = (1.5, −0.8)`, `α0 = (−2, 1)`, `n = 4000`, `η = 0.2`, `T = 150`.
    pub fn two_d(estimator: ObjectiveKind) -> Self {
        Self {
            target_mean: vec![1.5, -0.8],
            init_mean: vec![-2.0, 1.0],
            estimator,
            samples_per_iter: 4000,
            step_size: 0.2,
            iterations: 150,
            seed: 0,
            common_random_numbers: true,
            nwj_cap: HARNESS_NWJ_CAP,
        }
    }

    /// `α* = (−1.5, −0.75, 0, 0.75, 1.5)` started from `−α*`.
    pub fn five_d(estimator: ObjectiveKind) -> Self {
        let target = vec![-1.5, -0.75, 0.0, 0.75, 1.5];
        Self {
            init_mean: target.iter().map(|v| -v).collect(),
            target_mean: target,
            ..Self::two_d(estimator)
        }
    }

    /// Preset for dimension 2 or 5.
    pub fn preset(dim: usize, estimator: ObjectiveKind) -> Result<Self> {
        match dim {
            2 => Ok(Self::two_d(estimator)),
            5 => Ok(Self::five_d(estimator)),
            d => Err(Error::invalid(format!("no trajectory preset for dimension {d} (use 2 or 5)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::check_dim(self.target_mean.len(), self.init_mean.len())?;
        if self.target_mean.is_empty() {
            return Err(Error::invalid("target_mean must be nonempty"));
        }
        if self.samples_per_iter == 0 || self.iterations == 0 {
            return Err(Error::invalid("samples_per_iter and iterations must be positive"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(self.nwj_cap > 0.0) {
            return Err(Error::invalid("nwj_cap must be positive"));
        }
        self.estimator.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// `‖α_t − α*‖` for `t = 0..T`.
    pub distances: Vec<f64>,
    /// `‖ĝ_t − (α* − α_t)‖` for `t = 0..T`.
    pub grad_errors: Vec<f64>,
    /// `α_t` for `t = 0..T`.
    pub means: Vec<Array1<f64>>,
    /// `α_T`, after the last update.
    pub final_mean: Array1<f64>,
    pub final_distance: f64,
    /// `(1/T) Σ_{t<T} ‖α_t − α*‖²`.
    pub mse: f64,
}

impl TrajectoryRecord {
    /// Mean over iterations of `‖α_t − β_t‖` between two runs of equal length.
    pub fn mean_gap(&self, other: &TrajectoryRecord) -> Result<f64> {
        crate::error::check_dim(self.means.len(), other.means.len())?;
        let total: f64 = self
            .means
            .iter()
            .zip(&other.means)
            .map(|(a, b)| (a - b).dot(&(a - b)).sqrt())
            .sum();
        Ok(total / self.means.len() as f64)
    }
}

fn stream_for(config: &TrajectoryConfig) -> rng::Stream {
    if config.common_random_numbers {
        rng::derive(config.seed, &[0])
    } else {
        // Distinct stream per estimator: hash its text form.
        let key = config
            .estimator
            .to_string()
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        rng::derive(config.seed, &[1, key])
    }
}

pub fn trajectory_run(config: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    config.validate()?;
    let d = config.target_mean.len();
    let n = config.samples_per_iter;
    let target = Array1::from(config.target_mean.clone());
    let mut alpha = Array1::from(config.init_mean.clone());
    let mut stream = stream_for(config);

    let mut record = TrajectoryRecord {
        distances: Vec::with_capacity(config.iterations),
        grad_errors: Vec::with_capacity(config.iterations),
        means: Vec::with_capacity(config.iterations),
        final_mean: Array1::zeros(d),
        final_distance: 0.0,
        mse: 0.0,
    };
    let mut sq_sum = 0.0;
    for t in 0..config.iterations {
        let gap = &target - &alpha;
        let dist2 = gap.dot(&gap);
        sq_sum += dist2;
        record.distances.push(dist2.sqrt());
        record.means.push(alpha.clone());

        // Innovations are drawn for every estimator so streams stay aligned.
        let mut pos: Array2<f64> = rng::standard_normal(&mut stream, n, d);
        pos += &target;
        let neg: Array2<f64> = rng::standard_normal(&mut stream, n, d);

        let model = GaussianLocationModel::new(alpha.clone())?;
        let grad = match config.estimator {
            ObjectiveKind::MleExact => mle_gradient_oracle(&model, target.view())?,
            kind => estimator_gradient(kind, &model, pos.view(), neg.view(), config.nwj_cap)
                .map_err(|e| match e {
                    Error::NonFiniteEstimate(what) => Error::NonFinite { step: t, what },
                    other => other,
                })?
                .vector,
        };
        record.grad_errors.push((&grad - &gap).dot(&(&grad - &gap)).sqrt());
        alpha.scaled_add(config.step_size, &grad);
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: t, what: format!("{} parameter update", config.estimator) });
        }
    }
    record.final_distance = (&alpha - &target).dot(&(&alpha - &target)).sqrt();
    record.final_mean = alpha;
    record.mse = sq_sum / config.iterations as f64;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let c = TrajectoryConfig::two_d(ObjectiveKind::Nce);
        assert_eq!((c.samples_per_iter, c.step_size, c.iterations), (4000, 0.2, 150));
        let c = TrajectoryConfig::five_d(ObjectiveKind::Nce);
        assert_eq!(c.init_mean, vec![1.5, 0.75, -0.0, -0.75, -1.5]);
        assert!(TrajectoryConfig::preset(3, ObjectiveKind::Nce).is_err());
    }

    #[test]
    fn exact_mle_contracts_geometrically() {
        let rec = trajectory_run(&TrajectoryConfig::two_d(ObjectiveKind::MleExact)).unwrap();
        assert_eq!(rec.distances.len(), 150);
        let d0 = rec.distances[0];
        for (t, d) in rec.distances.iter().enumerate() {
            assert!((d - d0 * 0.8f64.powi(t as i32)).abs() < 1e-12);
        }
        assert!(rec.final_distance <= 1e-10);
        assert!(rec.grad_errors.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = TrajectoryConfig::two_d(ObjectiveKind::n2ce(0.5));
        assert!(trajectory_run(&c).is_err());
        c.estimator = ObjectiveKind::Nce;
        c.init_mean = vec![0.0];
        assert!(trajectory_run(&c).is_err());
    }

    #[test]
    fn runs_are_deterministic_and_crn_is_shared() {
        let mut c = TrajectoryConfig::two_d(ObjectiveKind::n2ce(10.0));
        c.iterations = 5;
        c.samples_per_iter = 50;
        let a = trajectory_run(&c).unwrap();
        let b = trajectory_run(&c).unwrap();
        assert_eq!(a, b);
        // With M = 1 the N2CE and NCE runs see identical draws and coincide.
        c.estimator = ObjectiveKind::n2ce(1.0);
        let x = trajectory_run(&c).unwrap();
        c.estimator = ObjectiveKind::Nce;
        let y = trajectory_run(&c).unwrap();
        assert_eq!(x, y);
        c.common_random_numbers = false;
        let z = trajectory_run(&c).unwrap();
        assert_ne!(y.final_mean, z.final_mean);
    }

    #[test]
    fn mse_is_mean_squared_distance() {
        let mut c = TrajectoryConfig::two_d(ObjectiveKind::Nwj);
        c.iterations = 7;
        c.samples_per_iter = 100;
        let r = trajectory_run(&c).unwrap();
        let expect = r.distances.iter().map(|d| d * d).sum::<f64>() / 7.0;
        assert!((r.mse - expect).abs() < 1e-12);
        assert_eq!(r.mean_gap(&r).unwrap(), 0.0);
    }
}
