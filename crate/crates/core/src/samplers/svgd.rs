use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::checked_grad;
use crate::models::{AdamConfig, AdamState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvgdConfig {
    pub steps: usize,
    pub particle_count: usize,
    /// Adam learning rate.
    pub initial_step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub bandwidth_floor: f64,
    pub seed: u64,
}

impl Default for SvgdConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            steps: 500,
            particle_count: 128,
            initial_step: 0.3,
            beta1: adam.beta1,
            beta2: adam.beta2,
            bandwidth_floor: 1e-6,
            seed: 0,
        }
    }
}

impl SvgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.particle_count == 0 {
            return Err(Error::invalid("svgd needs steps >= 1 and particle_count >= 1"));
        }
        if !(self.bandwidth_floor > 0.0) {
            return Err(Error::invalid("bandwidth_floor must be positive"));
        }
        self.adam().validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.initial_step, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SvgdTrace {
    /// `h²` used at each step.
    pub bandwidths: Vec<f64>,
    /// Set when a single particle was run: the update is plain adaptive ascent.
    pub single_particle: bool,
}

/// `max(med² / (2 ln(Q + 1)), 1e-6)` with `med` the median pairwise distance.
pub fn svgd_bandwidth(particles: ArrayView2<'_, f64>) -> Result<f64> {
    svgd_bandwidth_with_floor(particles, 1e-6)
}

pub fn svgd_bandwidth_with_floor(particles: ArrayView2<'_, f64>, floor: f64) -> Result<f64> {
    let q = particles.nrows();
    if q < 2 {
        return Err(Error::invalid("bandwidth needs at least 2 particles"));
    }
    let mut dists = Vec::with_capacity(q * (q - 1) / 2);
    for i in 0..q {
        for j in (i + 1)..q {
            let d = &particles.row(i) - &particles.row(j);
            dists.push(d.dot(&d).sqrt());
        }
    }
    let mid = dists.len() / 2;
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let med = if dists.len() % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    Ok((med * med / (2.0 * ((q + 1) as f64).ln())).max(floor))
}

/// `φ(z_i) = (1/Q) Σ_j [k(z_j, z_i) ∇log p(z_j) + ∇_{z_j} k(z_j, z_i)]` for
/// the RBF kernel `exp(−‖z − z'‖² / (2h²))`.
pub fn svgd_direction(z: ArrayView2<'_, f64>, score: ArrayView2<'_, f64>, h2: f64) -> Array2<f64> {
    let q = z.nrows();
    let mut k = Array2::<f64>::zeros((q, q));
    for i in 0..q {
        for j in i..q {
            let d = &z.row(i) - &z.row(j);
            let v = (-d.dot(&d) / (2.0 * h2)).exp();
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    // Σ_j k_ij (z_i − z_j) / h² = (z_i Σ_j k_ij − Σ_j k_ij z_j) / h²
    let row_sums: Array1<f64> = k.sum_axis(Axis(1));
    let kz = k.dot(&z);
    let repulse = (&z * &row_sums.insert_axis(Axis(1)) - &kz) / h2;
    (k.dot(&score) + repulse) / q as f64
}

/// SVGD with Adam steps on the whole particle cloud and a median-heuristic
/// bandwidth recomputed every step.
pub fn svgd_run<G>(mut grad: G, init: ArrayView2<'_, f64>, config: &SvgdConfig) -> Result<(Array2<f64>, SvgdTrace)>
where
    G: FnMut(ArrayView2<'_, f64>) -> Result<Array2<f64>>,
{
    config.validate()?;
    if init.nrows() == 0 {
        return Err(Error::invalid("svgd needs at least one particle"));
    }
    let (q, d) = init.dim();
    let mut trace = SvgdTrace { bandwidths: Vec::with_capacity(config.steps), single_particle: q == 1 };
    let mut z = init.to_owned();
    let mut adam = AdamState::new(config.adam(), q * d)?;
    for step in 0..config.steps {
        let score = checked_grad(&mut grad, z.view(), step)?;
        let h2 = if q == 1 { config.bandwidth_floor } else { svgd_bandwidth_with_floor(z.view(), config.bandwidth_floor)? };
        trace.bandwidths.push(h2);
        let phi = svgd_direction(z.view(), score.view(), h2);
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step, what: "svgd direction".into() });
        }
        let flat = z.as_slice_mut().expect("owned particle matrix is contiguous");
        let phi_flat = phi.as_slice().expect("contiguous");
        adam.step(ndarray::aview_mut1(flat), ndarray::aview1(phi_flat), true)?;
    }
    Ok((z, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn bandwidth_examples() {
        let same = Array2::<f64>::from_elem((5, 2), 1.5);
        assert_eq!(svgd_bandwidth(same.view()).unwrap(), 1e-6);
        let two = array![[0.0, 0.0], [2.0, 0.0]];
        let h2 = svgd_bandwidth(two.view()).unwrap();
        assert!((h2 - 4.0 / (2.0 * 3f64.ln())).abs() < 1e-12);
        assert!((h2 - 1.8205).abs() < 1e-4);
        assert!(svgd_bandwidth(array![[1.0, 1.0]].view()).is_err());
        let cloud = rng::standard_normal(&mut rng::seeded(1), 20, 3);
        let shifted = &cloud + 7.5;
        assert!((svgd_bandwidth(cloud.view()).unwrap() - svgd_bandwidth(shifted.view()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn single_particle_direction_is_the_score() {
        let z = array![[0.3, -2.0]];
        let s = array![[1.0, 4.0]];
        assert_eq!(svgd_direction(z.view(), s.view(), 0.7), s);
    }

    #[test]
    fn direction_matches_pairwise_sum() {
        let z = rng::standard_normal(&mut rng::seeded(2), 6, 2);
        let s = rng::standard_normal(&mut rng::seeded(3), 6, 2);
        let h2 = 0.9;
        let phi = svgd_direction(z.view(), s.view(), h2);
        for i in 0..6 {
            let mut expect = Array1::<f64>::zeros(2);
            for j in 0..6 {
                let diff = &z.row(j) - &z.row(i);
                let kv = (-diff.dot(&diff) / (2.0 * h2)).exp();
                // ∇_{z_j} k(z_j, z_i) = −(z_j − z_i) k / h²
                expect = expect + &s.row(j) * kv - &diff * (kv / h2);
            }
            expect /= 6.0;
            assert!((&phi.row(i) - &expect).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn update_is_permutation_equivariant() {
        let z = rng::standard_normal(&mut rng::seeded(4), 7, 2);
        let perm = [3usize, 0, 6, 1, 5, 2, 4];
        let zp = z.select(Axis(0), &perm);
        let cfg = SvgdConfig { steps: 5, ..Default::default() };
        let (a, _) = svgd_run(|x| Ok(-&x), z.view(), &cfg).unwrap();
        let (b, _) = svgd_run(|x| Ok(-&x), zp.view(), &cfg).unwrap();
        assert!((&a.select(Axis(0), &perm) - &b).iter().all(|v| v.abs() < 1e-12));
    }

    fn min_dist(z: &Array2<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..z.nrows() {
            for j in (i + 1)..z.nrows() {
                let d = &z.row(i) - &z.row(j);
                best = best.min(d.dot(&d).sqrt());
            }
        }
        best
    }

    #[test]
    fn repulsion_spreads_particles() {
        for seed in 0..5 {
            // Small explicit steps along the direction itself.
            let mut z = rng::standard_normal(&mut rng::seeded(seed), 16, 2) * 0.1;
            let zero = Array2::<f64>::zeros(z.raw_dim());
            let mut prev = min_dist(&z);
            for _ in 0..50 {
                let h2 = svgd_bandwidth(z.view()).unwrap();
                z.scaled_add(1e-3, &svgd_direction(z.view(), zero.view(), h2));
                let now = min_dist(&z);
                assert!(now >= prev - 1e-12, "seed {seed}");
                prev = now;
            }
            // Under the full sampler the cloud widens at every step.
            let init = rng::standard_normal(&mut rng::seeded(seed), 16, 2) * 0.1;
            let cfg = SvgdConfig { steps: 50, initial_step: 0.01, ..Default::default() };
            let (_, trace) = svgd_run(|x| Ok(Array2::zeros(x.raw_dim())), init.view(), &cfg).unwrap();
            assert!(trace.bandwidths.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn single_particle_is_flagged_and_climbs() {
        let z = array![[3.0, -1.0]];
        let cfg = SvgdConfig { steps: 300, initial_step: 0.05, ..Default::default() };
        let (out, trace) = svgd_run(|x| Ok(-&x), z.view(), &cfg).unwrap();
        assert!(trace.single_particle);
        assert!(out.iter().all(|v| v.abs() < 0.2));
    }

    #[test]
    fn standard_normal_moments() {
        let init = rng::standard_normal(&mut rng::seeded(5), 128, 2) * 0.5 + 1.0;
        let (out, trace) = svgd_run(|x| Ok(-&x), init.view(), &SvgdConfig::default()).unwrap();
        assert_eq!(trace.bandwidths.len(), 500);
        let mean = out.mean_axis(Axis(0)).unwrap();
        assert!(mean.iter().all(|m| m.abs() < 0.1), "{mean}");
        let centered = &out - &mean;
        let cov = centered.t().dot(&centered) / 127.0;
        let err = (&cov - &Array2::<f64>::eye(2)).mapv(|v| v * v).sum().sqrt();
        assert!(err < 0.15, "{cov}");
    }

    #[test]
    fn non_finite_score_aborts() {
        let init = Array2::<f64>::zeros((3, 1));
        let res = svgd_run(|x| Ok(Array2::from_elem(x.raw_dim(), f64::INFINITY)), init.view(), &SvgdConfig::default());
        assert!(matches!(res, Err(Error::NonFinite { step: 0, .. })));
    }
}
