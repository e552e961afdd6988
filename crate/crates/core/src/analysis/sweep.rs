use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trajectory::{trajectory_run, TrajectoryConfig};
use crate::objectives::ObjectiveKind;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub estimator: ObjectiveKind,
    pub n: usize,
    pub repeats: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    /// Runs whose parameters left the finite range; they count as `+inf`.
    pub diverged: usize,
}

impl SweepRow {
    /// `M` for scaled-noise rows, empty otherwise.
    pub fn m(&self) -> Option<f64> {
        self.estimator.noise_magnitude()
    }

    /// Standard error of `mse_mean`.
    pub fn stderr(&self) -> f64 {
        self.mse_std / (self.repeats as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Row with the smallest `mse_mean` (first one on ties).
    pub fn argmin(&self) -> Option<&SweepRow> {
        self.rows.iter().fold(None, |best: Option<&SweepRow>, r| match best {
            Some(b) if b.mse_mean <= r.mse_mean => Some(b),
            _ => Some(r),
        })
    }

    pub fn find(&self, estimator: ObjectiveKind) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }
}

/// Sample mean and (n − 1)-normalized standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 || !mean.is_finite() {
        return (mean, if mean.is_finite() { 0.0 } else { f64::INFINITY });
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Seed for run `run` of entry `entry`. Entries share run seeds so they are
/// compared on common random numbers.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    rng::derive_seed(seed, &[run as u64])
}

/// Trajectory MSE statistics for each grid entry over `repeats` runs of the
/// `dim`-dimensional preset with `n` samples per iteration.
pub fn mse_sweep(dim: usize, n: usize, grid: &[ObjectiveKind], repeats: usize, seed: u64) -> Result<SweepTable> {
    if repeats < 2 {
        return Err(Error::invalid("mse_sweep needs repeats >= 2"));
    }
    if grid.is_empty() {
        return Err(Error::invalid("mse_sweep needs a nonempty grid"));
    }
    let base = TrajectoryConfig { samples_per_iter: n, ..TrajectoryConfig::preset(dim, ObjectiveKind::Nce)? };
    for &kind in grid {
        TrajectoryConfig { estimator: kind, ..base.clone() }.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|e| (0..repeats).map(move |r| (e, r))).collect();
    let mses: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(e, r)| {
            let config = TrajectoryConfig { estimator: grid[e], seed: run_seed(seed, r), ..base.clone() };
            match trajectory_run(&config) {
                Ok(rec) => Ok(rec.mse),
                Err(Error::NonFinite { .. }) | Err(Error::NumericRange { .. }) => Ok(f64::INFINITY),
                Err(other) => Err(other),
            }
        })
        .collect();
    let mses = mses.into_iter().collect::<Result<Vec<f64>>>()?;
    let rows = grid
        .iter()
        .enumerate()
        .map(|(e, &kind)| {
            let runs = &mses[e * repeats..(e + 1) * repeats];
            let (mse_mean, mse_std) = mean_std(runs);
            SweepRow { estimator: kind, n, repeats, mse_mean, mse_std, diverged: runs.iter().filter(|v| !v.is_finite()).count() }
        })
        .collect();
    Ok(SweepTable { rows })
}

/// Grid with 100 repeats at `n = 2`.
pub fn small_n_grid() -> Vec<ObjectiveKind> {
    let mut g = vec![ObjectiveKind::Nwj];
    g.extend([1.0, 1.5, 2.0, 5.0, 10.0, 100.0, 1000.0, 1e9].map(ObjectiveKind::n2ce));
    g
}

/// Grid with 100 repeats at `n = 500`.
pub fn large_n_grid() -> Vec<ObjectiveKind> {
    let mut g = vec![ObjectiveKind::Nwj];
    g.extend([1.0, 10.0, 50.0, 100.0, 1000.0, 1e4, 2e4, 1e9].map(ObjectiveKind::n2ce));
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub argmin_m: f64,
    pub mse_mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub within: bool,
    /// A single-entry grid makes the bracket check meaningless.
    pub vacuous: bool,
}

/// Default geometric `M` grid for [`optimal_m_scaling_check`].
pub fn geometric_m_grid() -> Vec<f64> {
    vec![1.0, 1.5, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0, 70.0, 100.0, 150.0, 200.0, 300.0, 500.0, 1000.0]
}

/// Per `n`: sweep the 5-D preset over `m_grid` and test whether the best `M`
/// lies in `[√n, 10√n]`.
pub fn optimal_m_scaling_check(ns: &[usize], m_grid: &[f64], repeats: usize, seed: u64) -> Result<Vec<ScalingRow>> {
    if ns.iter().any(|&n| n < 2) {
        return Err(Error::invalid("every n must be >= 2"));
    }
    let grid: Vec<ObjectiveKind> = m_grid.iter().map(|&m| ObjectiveKind::n2ce(m)).collect();
    ns.iter()
        .map(|&n| {
            let table = mse_sweep(5, n, &grid, repeats, seed)?;
            let best = table.argmin().expect("nonempty grid");
            let m = best.m().expect("N2CE entries");
            let (lower, upper) = ((n as f64).sqrt(), 10.0 * (n as f64).sqrt());
            Ok(ScalingRow {
                n,
                argmin_m: m,
                mse_mean: best.mse_mean,
                lower,
                upper,
                within: m >= lower && m <= upper,
                vacuous: m_grid.len() == 1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_deterministic() {
        let grid = [ObjectiveKind::n2ce(1.0), ObjectiveKind::n2ce(10.0)];
        let a = mse_sweep(5, 20, &grid, 2, 3).unwrap();
        let b = mse_sweep(5, 20, &grid, 2, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 2);
        assert!(a.rows.iter().all(|r| r.mse_mean >= 0.0 && r.repeats == 2));
    }

    #[test]
    fn sweep_rejects_bad_input() {
        assert!(mse_sweep(5, 10, &[ObjectiveKind::Nce], 1, 0).is_err());
        assert!(mse_sweep(5, 10, &[], 2, 0).is_err());
        assert!(mse_sweep(5, 10, &[ObjectiveKind::n2ce(0.1)], 2, 0).is_err());
        assert!(mse_sweep(3, 10, &[ObjectiveKind::Nce], 2, 0).is_err());
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        let (m, s) = mean_std(&[1.0, f64::INFINITY]);
        assert!(m.is_infinite() && s.is_infinite());
    }

    #[test]
    fn degenerate_grid_is_flagged() {
        let rows = optimal_m_scaling_check(&[4], &[3.0], 2, 0).unwrap();
        assert_eq!(rows[0].argmin_m, 3.0);
        assert!(rows[0].vacuous && rows[0].within);
        assert!(optimal_m_scaling_check(&[1], &[3.0], 2, 0).is_err());
    }

    #[test]
    fn argmin_picks_first_smallest() {
        let row = |m: f64, v: f64| SweepRow { estimator: ObjectiveKind::n2ce(m), n: 1, repeats: 2, mse_mean: v, mse_std: 0.0, diverged: 0 };
        let t = SweepTable { rows: vec![row(1.0, 3.0), row(2.0, 1.0), row(3.0, 1.0)] };
        assert_eq!(t.argmin().unwrap().m(), Some(2.0));
    }
}
