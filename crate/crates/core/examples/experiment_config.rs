//! Builds an experiment config in code, writes it as TOML and runs a
//! subcommand through the library, as the binary does.

use n2ce::cli::{run_subcommand, ExperimentConfig, RunOptions, Subcommand};

fn main() -> n2ce::Result<()> {
    let dir = std::env::temp_dir().join("n2ce-example");
    std::fs::create_dir_all(&dir)?;
    let mut config = ExperimentConfig::default();
    config.divergence.m_grid = vec![1.0, 1e9];
    let path = dir.join("config.toml");
    std::fs::write(&path, config.to_toml()?)?;

    let options = RunOptions { config_path: Some(path), out_dir: dir.clone(), seed: Some(11), threads: Some(2) };
    let report = run_subcommand(Subcommand::DivergenceCheck, &options)?;
    for line in &report.log {
        println!("{line}");
    }
    println!("{}", std::fs::read_to_string(dir.join("divergence.csv"))?);
    Ok(())
}
