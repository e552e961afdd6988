use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::{Error, Result};

/// Three-stage preset, `σ²` values.
pub const K3_SIGMA_SQ: [f64; 4] = [0.01, 0.69175489, 0.92238785, 0.99974058];
/// Six-stage preset, `σ²` values.
pub const K6_SIGMA_SQ: [f64; 7] = [0.01, 0.3237, 0.5165, 0.6322, 0.7132, 0.7734, 0.9997];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulePreset {
    #[serde(rename = "K3")]
    K3,
    #[serde(rename = "K6")]
    K6,
}

/// Interpolation levels `σ_0 < … < σ_K`, stored as `σ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SigmaSchedule {
    sigma_sq: Vec<f64>,
}

impl TryFrom<Vec<f64>> for SigmaSchedule {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::from_sigma_sq(v)
    }
}

impl From<SigmaSchedule> for Vec<f64> {
    fn from(s: SigmaSchedule) -> Self {
        s.sigma_sq
    }
}

impl SigmaSchedule {
    pub fn preset(p: SchedulePreset) -> Self {
        let v = match p {
            SchedulePreset::K3 => K3_SIGMA_SQ.to_vec(),
            SchedulePreset::K6 => K6_SIGMA_SQ.to_vec(),
        };
        Self { sigma_sq: v }
    }

    /// Custom `σ²` values: each in `(0, 1]`, strictly increasing.
    pub fn from_sigma_sq(sigma_sq: Vec<f64>) -> Result<Self> {
        if sigma_sq.is_empty() {
            return Err(Error::invalid("sigma schedule must be nonempty"));
        }
        if let Some(v) = sigma_sq.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::invalid(format!("sigma^2 value {v} outside (0, 1]")));
        }
        if sigma_sq.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(format!("sigma^2 values must be strictly increasing: {sigma_sq:?}")));
        }
        Ok(Self { sigma_sq })
    }

    /// Schedule with `k + 1` levels: `σ_j² = 1 − Π_{i≤j}(1 − β_i)` with `β`
    /// linear in `j`, calibrated so the levels run from 0.01 to 0.9997. The
    /// presets are returned verbatim for `k = 3` and `k = 6`.
    pub fn general(k: usize) -> Result<Self> {
        match k {
            3 => return Ok(Self::preset(SchedulePreset::K3)),
            6 => return Ok(Self::preset(SchedulePreset::K6)),
            0 => return Self::from_sigma_sq(vec![0.01]),
            _ => {}
        }
        let (first, last) = (0.01f64, 0.9997f64);
        let levels = |beta_end: f64| -> Vec<f64> {
            let mut keep = 1.0;
            (0..=k)
                .map(|j| {
                    let beta = first + (beta_end - first) * j as f64 / k as f64;
                    keep *= 1.0 - beta;
                    1.0 - keep
                })
                .collect()
        };
        // The top level is increasing in β_K; bisect on [first, 1).
        let (mut lo, mut hi) = (first, 1.0 - 1e-12);
        if levels(hi)[k] < last {
            return Err(Error::invalid(format!("no linear schedule with {} levels reaches {last}", k + 1)));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if levels(mid)[k] < last {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::from_sigma_sq(levels(0.5 * (lo + hi)))
    }

    /// `K`: the index of the top level.
    pub fn k(&self) -> usize {
        self.sigma_sq.len() - 1
    }

    /// `K + 1` stages, one per level.
    pub fn num_stages(&self) -> usize {
        self.sigma_sq.len()
    }

    pub fn sigma_sq(&self) -> &[f64] {
        &self.sigma_sq
    }

    /// `σ_k` for `k = 0..=K`, and `1` (the raw target) for `k = K + 1`.
    pub fn sigma(&self, k: usize) -> Result<f64> {
        match k {
            k if k < self.sigma_sq.len() => Ok(self.sigma_sq[k].sqrt()),
            k if k == self.sigma_sq.len() => Ok(1.0),
            _ => Err(Error::invalid(format!("level {k} out of range 0..={}", self.sigma_sq.len()))),
        }
    }
}

/// Per-stage objective weights `w_k = sqrt(σ_K / Π_{i=k}^{K} σ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageWeights {
    pub w: Vec<f64>,
}

impl StageWeights {
    pub fn new(schedule: &SigmaSchedule) -> Self {
        let sig: Vec<f64> = schedule.sigma_sq.iter().map(|v| v.sqrt()).collect();
        let top = sig[sig.len() - 1];
        let w = (0..sig.len())
            .map(|k| {
                let prod: f64 = sig[k..].iter().product();
                (top / prod).sqrt()
            })
            .collect();
        Self { w }
    }

    /// All ones.
    pub fn uniform(num_stages: usize) -> Self {
        Self { w: vec![1.0; num_stages] }
    }
}

/// `√(1 − σ²) z0 + σ z_top`, row by row.
pub fn interpolate_stage(z0: ArrayView2<'_, f64>, z_top: ArrayView2<'_, f64>, sigma: f64) -> Result<Array2<f64>> {
    check_dim(z0.nrows(), z_top.nrows())?;
    check_dim(z0.ncols(), z_top.ncols())?;
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::invalid(format!("sigma {sigma} outside [0, 1]")));
    }
    let a = (1.0 - sigma * sigma).sqrt();
    Ok(&z0 * a + &z_top * sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::{array, Axis};
    use proptest::prelude::*;

    #[test]
    fn presets_are_verbatim() {
        assert_eq!(SigmaSchedule::preset(SchedulePreset::K3).sigma_sq(), &[0.01, 0.69175489, 0.92238785, 0.99974058]);
        assert_eq!(
            SigmaSchedule::preset(SchedulePreset::K6).sigma_sq(),
            &[0.01, 0.3237, 0.5165, 0.6322, 0.7132, 0.7734, 0.9997]
        );
        assert_eq!(SigmaSchedule::preset(SchedulePreset::K3).k(), 3);
    }

    #[test]
    fn custom_values_are_validated() {
        assert!(SigmaSchedule::from_sigma_sq(vec![0.5, 0.4]).is_err());
        assert!(SigmaSchedule::from_sigma_sq(vec![0.0, 0.4]).is_err());
        assert!(SigmaSchedule::from_sigma_sq(vec![0.4, 1.2]).is_err());
        assert!(SigmaSchedule::from_sigma_sq(vec![]).is_err());
        assert!(SigmaSchedule::from_sigma_sq(vec![0.1, 1.0]).is_ok());
    }

    #[test]
    fn general_schedules_hit_the_endpoints() {
        for k in [1, 2, 4, 5, 10] {
            let s = SigmaSchedule::general(k).unwrap();
            assert_eq!(s.num_stages(), k + 1);
            assert!((s.sigma_sq()[0] - 0.01).abs() < 1e-12);
            assert!((s.sigma_sq()[k] - 0.9997).abs() < 1e-9, "{k}: {:?}", s.sigma_sq());
        }
        assert_eq!(SigmaSchedule::general(3).unwrap(), SigmaSchedule::preset(SchedulePreset::K3));
    }

    #[test]
    fn top_level_is_the_raw_target() {
        let s = SigmaSchedule::preset(SchedulePreset::K3);
        assert_eq!(s.sigma(4).unwrap(), 1.0);
        assert!((s.sigma(0).unwrap() - 0.1).abs() < 1e-15);
        assert!(s.sigma(5).is_err());
    }

    #[test]
    fn weights_follow_the_formula() {
        let s = SigmaSchedule::preset(SchedulePreset::K6);
        let w = StageWeights::new(&s);
        assert_eq!(w.w.len(), 7);
        assert!((w.w[6] - 1.0).abs() < 1e-15);
        let sig: Vec<f64> = s.sigma_sq().iter().map(|v| v.sqrt()).collect();
        let expect = (sig[6] / (sig[2] * sig[3] * sig[4] * sig[5] * sig[6])).sqrt();
        assert!((w.w[2] - expect).abs() < 1e-14);
        assert!(w.w.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn interpolation_endpoints_and_errors() {
        let a = array![[1.0, 2.0]];
        let b = array![[-3.0, 0.5]];
        assert_eq!(interpolate_stage(a.view(), b.view(), 0.0).unwrap(), a);
        assert_eq!(interpolate_stage(a.view(), b.view(), 1.0).unwrap(), b);
        assert!(interpolate_stage(a.view(), b.view(), 1.5).is_err());
        assert!(interpolate_stage(a.view(), array![[1.0]].view(), 0.5).is_err());
    }

    #[test]
    fn interpolation_preserves_unit_variance() {
        let mut r = rng::seeded(4);
        let z0 = rng::standard_normal(&mut r, 100_000, 2);
        let z1 = rng::standard_normal(&mut r, 100_000, 2);
        for sigma in [0.1, 0.5, 0.9] {
            let z = interpolate_stage(z0.view(), z1.view(), sigma).unwrap();
            for v in z.var_axis(Axis(0), 1.0).iter() {
                assert!((v - 1.0).abs() < 0.02);
            }
        }
    }

    #[test]
    fn consecutive_stages_overlap_more_than_the_endpoints() {
        // For q* = N(μ, I) stage k is N(σ_k μ, I).
        let mu2 = 8.0;
        for s in [SigmaSchedule::preset(SchedulePreset::K3), SigmaSchedule::preset(SchedulePreset::K6)] {
            let full = mu2 / 2.0;
            for k in 0..s.num_stages() {
                let gap = s.sigma(k + 1).unwrap() - s.sigma(k).unwrap();
                assert!(gap * gap * mu2 / 2.0 < full);
            }
        }
    }

    proptest! {
        #[test]
        fn interpolation_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, sigma in 0.0f64..1.0) {
            let z = array![[a, b]];
            let y = array![[c, a]];
            let lhs = interpolate_stage((&z * 2.0).view(), (&y * 2.0).view(), sigma).unwrap();
            let rhs = interpolate_stage(z.view(), y.view(), sigma).unwrap() * 2.0;
            prop_assert!((&lhs - &rhs).iter().all(|v| v.abs() < 1e-12));
            let same = interpolate_stage(z.view(), z.view(), sigma).unwrap();
            let bound = ((1.0 - sigma * sigma).sqrt() + sigma) * z.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(same.iter().map(|v| v * v).sum::<f64>().sqrt() <= bound + 1e-12);
        }
    }
}
