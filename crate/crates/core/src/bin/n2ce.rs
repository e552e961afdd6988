use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use n2ce::cli::{error_record, run_subcommand, RunOptions, Subcommand};

#[derive(Parser)]
#[command(name = "n2ce", version, about = "Noise-scaled NCE experiment runner")]
#[command(after_help = "Environment: N2CE_OUT sets the output directory, N2CE_THREADS the worker count.\n\
Langevin steps use z <- z + (s^2/2) grad log p(z) + s eps.")]
enum Cli {
    /// Finite-difference audit of every estimator gradient
    Gradcheck(Common),
    /// Gradient-ascent trajectories per estimator
    Trajectory(Common),
    /// Gradient error against M with its log-log slope
    BiasDecay(Common),
    /// Trajectory MSE over an estimator grid
    MseSweep(Common),
    /// Best M per sample size against [sqrt n, 10 sqrt n]
    OptimalM(Common),
    /// Normalized ascent against the iteration bound
    ConvergeExpfam(Common),
    /// Monte-Carlo divergence bound against quadrature
    DivergenceCheck(Common),
    /// Multi-stage ratio fit evaluated on a grid
    TelescopeFit(Common),
    /// SVGD on the configured mixture
    SvgdSample(Common),
    /// Langevin dynamics on the configured mixture
    LangevinSample(Common),
    /// Offline Branin optimization over several seeds
    Branin(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; omitted sections and keys take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides N2CE_OUT)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's master seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let (cmd, common) = match Cli::parse() {
        Cli::Gradcheck(c) => (Subcommand::Gradcheck, c),
        Cli::Trajectory(c) => (Subcommand::Trajectory, c),
        Cli::BiasDecay(c) => (Subcommand::BiasDecay, c),
        Cli::MseSweep(c) => (Subcommand::MseSweep, c),
        Cli::OptimalM(c) => (Subcommand::OptimalM, c),
        Cli::ConvergeExpfam(c) => (Subcommand::ConvergeExpfam, c),
        Cli::DivergenceCheck(c) => (Subcommand::DivergenceCheck, c),
        Cli::TelescopeFit(c) => (Subcommand::TelescopeFit, c),
        Cli::SvgdSample(c) => (Subcommand::SvgdSample, c),
        Cli::LangevinSample(c) => (Subcommand::LangevinSample, c),
        Cli::Branin(c) => (Subcommand::Branin, c),
    };
    let options = match RunOptions::with_env(common.config, common.out, common.seed) {
        Ok(o) => o,
        Err(e) => {
            eprint!("{}", error_record(Some(cmd), &e));
            return ExitCode::FAILURE;
        }
    };
    match run_subcommand(cmd, &options) {
        Ok(report) => {
            for line in &report.log {
                println!("{line}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = error_record(Some(cmd), &e);
            eprint!("{record}");
            // Best effort: the failure may be that the directory is unwritable.
            let _ = std::fs::create_dir_all(&options.out_dir)
                .and_then(|_| std::fs::write(options.out_dir.join(format!("{cmd}.error.toml")), &record));
            ExitCode::FAILURE
        }
    }
}
