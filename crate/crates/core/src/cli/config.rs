use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{geometric_m_grid, large_n_grid, TrajectoryConfig};
use crate::objectives::ObjectiveKind;
use crate::samplers::{LangevinConfig, SvgdConfig};
use crate::tasks::{BboConfig, GmmTarget};
use crate::telescoping::{SchedulePreset, TelescopeConfig};
use crate::{Error, Result};

/// Finite-difference audit of every estimator gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    pub samples: usize,
    /// Parameter coordinates probed on the ratio network.
    pub mlp_coordinates: usize,
    pub fd_step: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self { samples: 200, mlp_coordinates: 100, fd_step: 1e-5 }
    }
}

/// Repeated trajectories for several estimators on common random numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub estimators: Vec<ObjectiveKind>,
    pub repeats: usize,
    pub run: TrajectoryConfig,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            estimators: vec![
                ObjectiveKind::MleExact,
                ObjectiveKind::n2ce(1000.0),
                ObjectiveKind::n2ce(100.0),
                ObjectiveKind::n2ce(10.0),
                ObjectiveKind::Nce,
            ],
            repeats: 20,
            run: TrajectoryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasSection {
    pub alpha: Vec<f64>,
    pub target: Vec<f64>,
    pub m_grid: Vec<f64>,
    pub n: usize,
    pub repeats: usize,
}

impl Default for BiasSection {
    fn default() -> Self {
        Self {
            alpha: vec![-2.0, 1.0],
            target: vec![1.5, -0.8],
            m_grid: vec![10.0, 30.0, 100.0, 300.0, 1000.0],
            n: 1_000_000,
            repeats: 5,
        }
    }
}

/// MSE sweeps and the optimal-M scaling check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub dim: usize,
    pub n: usize,
    pub repeats: usize,
    pub grid: Vec<ObjectiveKind>,
    pub scaling_ns: Vec<usize>,
    pub scaling_grid: Vec<f64>,
    pub scaling_repeats: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            dim: 5,
            n: 500,
            repeats: 100,
            grid: large_n_grid(),
            scaling_ns: vec![2, 50, 500],
            scaling_grid: geometric_m_grid(),
            scaling_repeats: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeSection {
    pub alpha0: Vec<f64>,
    pub target: Vec<f64>,
    pub m: f64,
    pub delta: f64,
    pub step: f64,
    pub n: usize,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self { alpha0: vec![-2.0, 1.0], target: vec![1.5, -0.8], m: 1000.0, delta: 0.05, step: 0.025, n: 100_000 }
    }
}

/// `q* = N(shift, I)` against `q0 = N(0, I)` with the true ratio plugged in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DivergenceSection {
    pub shift: Vec<f64>,
    pub m_grid: Vec<f64>,
    pub n: usize,
}

impl Default for DivergenceSection {
    fn default() -> Self {
        Self { shift: vec![1.0], m_grid: vec![1.0, 10.0, 100.0, 1e9], n: 100_000 }
    }
}

/// Telescoping fit against `N(target_mean, I)` and its grid evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TelescopingSection {
    pub target_mean: Vec<f64>,
    pub schedule: SchedulePreset,
    pub hidden_width: usize,
    pub num_resblocks: usize,
    pub fit: TelescopeConfig,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
}

impl Default for TelescopingSection {
    fn default() -> Self {
        Self {
            target_mean: vec![2.0, 2.0],
            schedule: SchedulePreset::K3,
            hidden_width: 32,
            num_resblocks: 3,
            fit: TelescopeConfig { iterations: 1000, ..TelescopeConfig::default() },
            grid_lo: -3.0,
            grid_hi: 5.0,
            grid_points: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub target: GmmTarget,
    pub svgd: SvgdConfig,
    pub langevin: LangevinConfig,
    pub langevin_particles: usize,
}

/// Three modes with variance 0.1, spaced evenly on the circle of radius 3
/// so that a standard-normal start splits evenly between them.
pub fn three_mode_target() -> GmmTarget {
    let means = [90.0f64, 210.0, 330.0].map(|deg| vec![3.0 * deg.to_radians().cos(), 3.0 * deg.to_radians().sin()]);
    GmmTarget::uniform(means.to_vec(), 0.1).expect("valid constants")
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self { target: three_mode_target(), svgd: SvgdConfig::default(), langevin: LangevinConfig::default(), langevin_particles: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BraninSection {
    pub dataset_size: usize,
    pub remove_top_fraction: f64,
    /// Seeds `seed, seed + 1, …` are run.
    pub seeds: usize,
    pub run: BboConfig,
}

impl Default for BraninSection {
    fn default() -> Self {
        Self { dataset_size: 5000, remove_top_fraction: 0.1, seeds: 5, run: BboConfig::default() }
    }
}

/// Everything a subcommand needs, as one TOML document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed. Resolution copies it into every section's own seed field.
    pub seed: u64,
    pub gradcheck: GradcheckSection,
    pub trajectory: TrajectorySection,
    pub bias: BiasSection,
    pub sweep: SweepSection,
    pub converge: ConvergeSection,
    pub divergence: DivergenceSection,
    pub telescoping: TelescopingSection,
    pub sampler: SamplerSection,
    pub bbo: BraninSection,
}

impl ExperimentConfig {
    /// Parses a TOML document. Every unknown key is reported, not just the
    /// first one.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let reference = toml::Table::try_from(Self::default()).map_err(|e| Error::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        collect_unknown(&doc, &reference, "", text, &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies a seed override and propagates the master seed.
    pub fn resolve(mut self, seed_override: Option<u64>) -> Self {
        if let Some(s) = seed_override {
            self.seed = s;
        }
        let s = self.seed;
        self.trajectory.run.seed = s;
        self.telescoping.fit.seed = s;
        self.sampler.svgd.seed = s;
        self.sampler.langevin.seed = s;
        self.bbo.run.seed = s;
        self
    }
}

fn collect_unknown(doc: &toml::Table, reference: &toml::Table, prefix: &str, text: &str, out: &mut Vec<String>) {
    for (key, value) in doc {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (value, reference.get(key)) {
            (_, None) => out.push(match line_of(text, key) {
                Some(line) => format!("{path} (line {line})"),
                None => path,
            }),
            (toml::Value::Table(sub), Some(toml::Value::Table(known))) => collect_unknown(sub, known, &path, text, out),
            _ => {}
        }
    }
}

/// First line that defines `key` or opens a table named by it, 1-based.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim();
            match l.strip_prefix('[') {
                Some(header) => header.trim_end_matches(']').split('.').any(|seg| seg.trim() == key),
                None => l.strip_prefix(key).is_some_and(|rest| {
                    let rest = rest.trim_start();
                    rest.starts_with('=') || rest.starts_with('.')
                }),
            }
        })
        .map(|i| i + 1)
}
