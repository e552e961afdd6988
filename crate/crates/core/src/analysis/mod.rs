//! Experiment harness for the Gaussian location family: gradient-ascent
//! trajectories, bias decay in `M`, MSE sweeps over estimator grids, the
//! optimal-`M` scaling check and normalized-ascent convergence.

mod bias;
mod converge;
mod sweep;
mod trajectory;

pub use bias::{gradient_error_vs_m, gradient_variance, population_n2ce_gradient, GradErrorRow};
pub use converge::{
    empirical_kappa, iteration_bound, normalized_ascent_converge, ConvergeReport, KAPPA_SAMPLES,
    MAX_ASCENT_ITERATIONS,
};
pub use sweep::{
    geometric_m_grid, large_n_grid, mse_sweep, optimal_m_scaling_check, run_seed, small_n_grid, ScalingRow,
    SweepRow, SweepTable,
};
pub use trajectory::{trajectory_run, TrajectoryConfig, TrajectoryRecord, HARNESS_NWJ_CAP};

use crate::{Error, Result};

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    crate::error::check_dim(xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(Error::invalid("loglog_slope needs at least 2 points"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("loglog_slope needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("loglog_slope needs at least two distinct x values"));
    }
    Ok(sxy / sxx)
}
