use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::models::GaussianLocationModel;
use crate::objectives::n2ce_gradient;
use crate::{rng, Error, Result};

/// Number of draws used to estimate the condition number.
pub const KAPPA_SAMPLES: usize = 1_000_000;

/// Iterations actually run never exceed this, whatever the budget says.
pub const MAX_ASCENT_ITERATIONS: u64 = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeReport {
    pub success: bool,
    pub first_hit: Option<u64>,
    /// `ceil(10 κ³ ‖α0 − α*‖² / δ²)`.
    pub bound: u64,
    pub kappa: f64,
    pub delta: f64,
    /// Steps skipped because the gradient estimate was exactly zero.
    pub stall_events: Vec<u64>,
    pub iterations_run: u64,
}

/// Condition number of `E[T Tᵀ]` with `T(x) = [x, −1]`, `x ~ N(target, I)`,
/// estimated from `samples` draws.
pub fn empirical_kappa(target: ArrayView1<'_, f64>, samples: usize, seed: u64) -> Result<f64> {
    if samples < 2 {
        return Err(Error::invalid("kappa needs at least 2 samples"));
    }
    let d = target.len();
    let mut stream = rng::derive(seed, &[0x6b61_7070_61]);
    let mut acc = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut t = vec![0.0; d + 1];
    t[d] = -1.0;
    let noise = rng::standard_normal(&mut stream, samples, d);
    for row in noise.rows() {
        for k in 0..d {
            t[k] = row[k] + target[k];
        }
        for i in 0..=d {
            for j in 0..=i {
                acc[(i, j)] += t[i] * t[j];
            }
        }
    }
    for i in 0..=d {
        for j in 0..i {
            acc[(j, i)] = acc[(i, j)];
        }
    }
    acc /= samples as f64;
    let eig = SymmetricEigen::new(acc).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 0.0) {
        return Err(Error::NonFiniteEstimate("second-moment matrix is singular".into()));
    }
    Ok(hi / lo)
}

pub fn iteration_bound(kappa: f64, initial_distance: f64, delta: f64) -> u64 {
    (10.0 * kappa.powi(3) * initial_distance.powi(2) / (delta * delta)).ceil() as u64
}

/// Normalized gradient ascent `α ← α + step · ĝ/‖ĝ‖` with the scaled
/// estimator, until `‖α − target‖ ≤ delta` or the iteration budget runs out.
pub fn normalized_ascent_converge(
    alpha0: ArrayView1<'_, f64>,
    target: ArrayView1<'_, f64>,
    m: f64,
    delta: f64,
    step: f64,
    n: usize,
    seed: u64,
) -> Result<ConvergeReport> {
    check_dim(target.len(), alpha0.len())?;
    if !(m >= 100.0 && m.is_finite()) {
        return Err(Error::invalid(format!("normalized ascent needs M >= 100, got {m}")));
    }
    if !(delta > 0.0 && step > 0.0) || n == 0 {
        return Err(Error::invalid("delta, step and n must be positive"));
    }
    let kappa = empirical_kappa(target, KAPPA_SAMPLES, seed)?;
    let dist = |a: &Array1<f64>| (a - &target).dot(&(a - &target)).sqrt();
    let mut alpha = alpha0.to_owned();
    let bound = iteration_bound(kappa, dist(&alpha), delta);
    let budget = bound.min(MAX_ASCENT_ITERATIONS);
    let mut report = ConvergeReport {
        success: false,
        first_hit: None,
        bound,
        kappa,
        delta,
        stall_events: Vec::new(),
        iterations_run: 0,
    };
    let mut stream = rng::derive(seed, &[1]);
    let d = target.len();
    for t in 0..=budget {
        if dist(&alpha) <= delta {
            report.success = true;
            report.first_hit = Some(t);
            break;
        }
        if t == budget {
            break;
        }
        let mut pos = rng::standard_normal(&mut stream, n, d);
        pos += &target;
        let neg = rng::standard_normal(&mut stream, n, d);
        let model = GaussianLocationModel::new(alpha.clone())?;
        let g = n2ce_gradient(&model, pos.view(), neg.view(), m)?;
        let norm = g.norm();
        report.iterations_run = t + 1;
        if norm == 0.0 {
            report.stall_events.push(t);
            continue;
        }
        alpha.scaled_add(step / norm, &g.vector);
    }
    Ok(report)
}
