//! Config-driven experiment runner. Each subcommand writes headered CSVs, a
//! resolved-config sidecar and a run log into the output directory.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use config::{
    three_mode_target, BiasSection, BraninSection, ConvergeSection, DivergenceSection, ExperimentConfig, GradcheckSection,
    SamplerSection, SweepSection, TelescopingSection, TrajectorySection,
};
pub use output::{fmt_float, CsvOut};

use crate::{Error, Result};

/// Environment variable overriding the output directory.
pub const ENV_OUT: &str = "N2CE_OUT";
/// Environment variable fixing the worker-thread count.
pub const ENV_THREADS: &str = "N2CE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subcommand {
    Gradcheck,
    Trajectory,
    BiasDecay,
    MseSweep,
    OptimalM,
    ConvergeExpfam,
    DivergenceCheck,
    TelescopeFit,
    SvgdSample,
    LangevinSample,
    Branin,
}

impl Subcommand {
    pub const ALL: [Subcommand; 11] = [
        Subcommand::Gradcheck,
        Subcommand::Trajectory,
        Subcommand::BiasDecay,
        Subcommand::MseSweep,
        Subcommand::OptimalM,
        Subcommand::ConvergeExpfam,
        Subcommand::DivergenceCheck,
        Subcommand::TelescopeFit,
        Subcommand::SvgdSample,
        Subcommand::LangevinSample,
        Subcommand::Branin,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Gradcheck => "gradcheck",
            Subcommand::Trajectory => "trajectory",
            Subcommand::BiasDecay => "bias-decay",
            Subcommand::MseSweep => "mse-sweep",
            Subcommand::OptimalM => "optimal-m",
            Subcommand::ConvergeExpfam => "converge-expfam",
            Subcommand::DivergenceCheck => "divergence-check",
            Subcommand::TelescopeFit => "telescope-fit",
            Subcommand::SvgdSample => "svgd-sample",
            Subcommand::LangevinSample => "langevin-sample",
            Subcommand::Branin => "branin",
        }
    }

    pub fn about(&self) -> &'static str {
        match self {
            Subcommand::Gradcheck => "finite-difference audit of every estimator gradient",
            Subcommand::Trajectory => "gradient-ascent trajectories per estimator on common random numbers",
            Subcommand::BiasDecay => "gradient error against M and its log-log slope",
            Subcommand::MseSweep => "trajectory MSE over an estimator grid",
            Subcommand::OptimalM => "best M per sample size against the [sqrt n, 10 sqrt n] bracket",
            Subcommand::ConvergeExpfam => "normalized ascent against the iteration bound",
            Subcommand::DivergenceCheck => "Monte-Carlo divergence bound against quadrature",
            Subcommand::TelescopeFit => "multi-stage ratio fit evaluated on a grid",
            Subcommand::SvgdSample => "SVGD on the configured mixture",
            Subcommand::LangevinSample => "Langevin dynamics z + (s^2/2) grad + s eps on the configured mixture",
            Subcommand::Branin => "offline optimization of the Branin task over several seeds",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown subcommand {s:?}\n{}", usage())))
    }
}

/// One line per subcommand.
pub fn usage() -> String {
    let mut s = String::from("usage: n2ce <subcommand> [--config FILE] [--out DIR] [--seed N]\nsubcommands:\n");
    for c in Subcommand::ALL {
        s.push_str(&format!("  {:<18}{}\n", c.name(), c.about()));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub config_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    /// `None` uses every available core.
    pub threads: Option<usize>,
}

impl RunOptions {
    /// Fills the output directory and thread count from the environment
    /// where the caller left them unset.
    pub fn with_env(config_path: Option<PathBuf>, out_dir: Option<PathBuf>, seed: Option<u64>) -> Result<Self> {
        let out_dir = out_dir.or_else(|| std::env::var_os(ENV_OUT).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
        let threads = match std::env::var(ENV_THREADS) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::Config(format!("{ENV_THREADS} must be a positive integer, got {v:?}")))?,
            ),
            Err(_) => None,
        };
        Ok(Self { config_path, out_dir, seed, threads })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub log: Vec<String>,
}

/// Sidecar holding the fully resolved config for a subcommand.
pub fn sidecar_path(out_dir: &Path, cmd: Subcommand) -> PathBuf {
    out_dir.join(format!("{}.resolved.toml", cmd.name()))
}

/// Loads and resolves the config, runs `cmd` on a dedicated thread pool and
/// writes its artifacts.
pub fn run_subcommand(cmd: Subcommand, options: &RunOptions) -> Result<RunReport> {
    let config = match &options.config_path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    }
    .resolve(options.seed);
    std::fs::create_dir_all(&options.out_dir)?;
    let sidecar = sidecar_path(&options.out_dir, cmd);
    std::fs::write(&sidecar, config.to_toml()?)?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut log = vec![format!("subcommand = {cmd}"), format!("seed = {}", config.seed)];
    let mut files = pool.install(|| commands::run(cmd, &config, &options.out_dir, &mut log)).map_err(|e| with_context(cmd, e))?;
    files.push(sidecar);
    let log_path = options.out_dir.join(format!("{}.log", cmd.name()));
    std::fs::write(&log_path, log.join("\n") + "\n")?;
    files.push(log_path);
    Ok(RunReport { files, log })
}

fn with_context(cmd: Subcommand, e: Error) -> Error {
    match e {
        Error::NonFinite { step, what } => Error::NonFinite { step, what: format!("{cmd}: {what}") },
        Error::NonFiniteEstimate(what) => Error::NonFiniteEstimate(format!("{cmd}: {what}")),
        other => other,
    }
}

/// Machine-readable failure record as a TOML table.
pub fn error_record(cmd: Option<Subcommand>, e: &Error) -> String {
    let kind = match e {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::NumericRange { .. } => "numeric_range",
        Error::UnsupportedDimension(_) => "unsupported_dimension",
        Error::NonFinite { .. } => "non_finite",
        Error::NonFiniteEstimate(_) => "non_finite_estimate",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
    };
    let mut table = toml::Table::new();
    table.insert("status".into(), "error".into());
    table.insert("kind".into(), kind.into());
    table.insert("subcommand".into(), cmd.map(|c| c.name()).unwrap_or("").into());
    table.insert("message".into(), e.to_string().into());
    if let Error::NonFinite { step, .. } = e {
        table.insert("step".into(), (*step as i64).into());
    }
    toml::to_string(&table).expect("plain table")
}
