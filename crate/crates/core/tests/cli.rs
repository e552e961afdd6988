//! The experiment runner end to end: output schemas, the binary's exit codes
//! and error records, and reproducibility across thread counts.

use std::path::Path;
use std::process::Command;

use n2ce::cli::{run_subcommand, sidecar_path, ExperimentConfig, RunOptions, Subcommand};

/// Every subcommand at a size that runs in about a second.
const TINY: &str = r#"
seed = 3

[gradcheck]
samples = 50
mlp_coordinates = 20

[trajectory]
estimators = ["MLE_EXACT", "N2CE:100", "NCE"]
repeats = 3
[trajectory.run]
samples_per_iter = 200
iterations = 10

[bias]
m_grid = [10.0, 100.0]
n = 5000
repeats = 2

[sweep]
n = 20
repeats = 4
scaling_ns = [2, 8]
scaling_grid = [1.0, 2.0, 5.0, 10.0]
scaling_repeats = 4

[converge]
n = 2000
step = 0.1
delta = 0.3

[divergence]
m_grid = [1.0, 1e9]
n = 2000

[telescoping]
hidden_width = 8
num_resblocks = 1
grid_points = 4
[telescoping.fit]
iterations = 20
batch_size = 8
noise_magnitude = 4.0

[sampler]
langevin_particles = 40
[sampler.svgd]
steps = 30
particle_count = 24
[sampler.langevin]
steps = 30

[bbo]
dataset_size = 300
seeds = 2
[bbo.run]
queries = 6
prior_hidden_width = 8
[bbo.run.prior]
iterations = 10
batch_size = 8
[bbo.run.regressor]
hidden_width = 8
num_resblocks = 1
iterations = 20
rmse_gate = 10.0
[bbo.run.svgd]
steps = 20
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_n2ce"));
    c.env_remove("N2CE_OUT").env_remove("N2CE_THREADS");
    c
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_owned()
}

#[test]
fn tiny_config_parses() {
    let c = ExperimentConfig::parse(TINY).unwrap();
    assert_eq!(c.seed, 3);
    assert_eq!(c.bbo.run.queries, 6);
}

#[test]
fn every_subcommand_writes_its_schema() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("out");
    let expected: &[(Subcommand, &str, &str)] = &[
        (Subcommand::Gradcheck, "gradcheck.csv", "estimator,model,max_rel_err,tolerance,pass"),
        (Subcommand::Trajectory, "trajectory.csv", "run_id,iter,distance,grad_error"),
        (
            Subcommand::Trajectory,
            "trajectory_summary.csv",
            "estimator,repeats,final_distance_mean,final_distance_stderr,mse_mean,mle_gap_mean",
        ),
        (Subcommand::BiasDecay, "bias_decay.csv", "M,grad_error_mean,grad_error_stderr"),
        (Subcommand::MseSweep, "mse_sweep.csv", "estimator,M,n,repeats,mse_mean,mse_std"),
        (Subcommand::OptimalM, "optimal_m.csv", "n,argmin_M,mse_mean,lower,upper,within,vacuous"),
        (Subcommand::ConvergeExpfam, "converge.csv", "kappa,delta,bound,first_hit,success"),
        (Subcommand::DivergenceCheck, "divergence.csv", "M,alpha,mc_bound,quadrature,stderr"),
        (Subcommand::TelescopeFit, "telescope_grid.csv", "z1,z2,log_ratio,true_log_ratio"),
        (Subcommand::TelescopeFit, "telescope_loss.csv", "iter,stage,loss"),
        (Subcommand::SvgdSample, "svgd_samples.csv", "particle,z1,z2"),
        (Subcommand::SvgdSample, "svgd_bandwidth.csv", "step,h2"),
        (Subcommand::LangevinSample, "langevin_samples.csv", "particle,z1,z2"),
        (Subcommand::Branin, "branin.csv", "seed,Q,best_value,y_max_dataset"),
        (Subcommand::Branin, "branin_candidates.csv", "seed,x1,x2,value"),
    ];
    for cmd in Subcommand::ALL {
        let options = RunOptions { config_path: Some(config.clone()), out_dir: out.clone(), seed: None, threads: Some(2) };
        let report = run_subcommand(cmd, &options).unwrap_or_else(|e| panic!("{cmd}: {e}"));
        assert!(report.files.contains(&sidecar_path(&out, cmd)));
        assert!(out.join(format!("{cmd}.log")).exists());
    }
    for (cmd, file, cols) in expected {
        assert_eq!(header(&out.join(file)), *cols, "{cmd} {file}");
    }

    let sweep = std::fs::read_to_string(out.join("mse_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 9);
    assert!(sweep.lines().nth(1).unwrap().starts_with("NWJ,,20,4,"));
    assert!(!sweep.contains('\r'));

    let candidates = std::fs::read_to_string(out.join("branin_candidates.csv")).unwrap();
    assert_eq!(candidates.lines().count(), 1 + 2 * 6);
    assert_eq!(std::fs::read_to_string(out.join("langevin_samples.csv")).unwrap().lines().count(), 41);
    assert_eq!(std::fs::read_to_string(out.join("telescope_grid.csv")).unwrap().lines().count(), 17);
}

#[test]
fn sidecar_reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for cmd in [Subcommand::Trajectory, Subcommand::MseSweep, Subcommand::TelescopeFit, Subcommand::Branin] {
        let first = RunOptions { config_path: Some(config.clone()), out_dir: a.clone(), seed: Some(21), threads: Some(4) };
        let report = run_subcommand(cmd, &first).unwrap();
        let again = RunOptions { config_path: Some(sidecar_path(&a, cmd)), out_dir: b.clone(), seed: None, threads: Some(1) };
        run_subcommand(cmd, &again).unwrap();
        for f in report.files.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")) {
            let name = f.file_name().unwrap();
            assert_eq!(std::fs::read(f).unwrap(), std::fs::read(b.join(name)).unwrap(), "{cmd}: {name:?}");
        }
        assert_eq!(std::fs::read(sidecar_path(&a, cmd)).unwrap(), std::fs::read(sidecar_path(&b, cmd)).unwrap());
    }
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let run = |seed, sub: &str| {
        let out = dir.path().join(sub);
        let options = RunOptions { config_path: Some(config.clone()), out_dir: out.clone(), seed: Some(seed), threads: Some(1) };
        run_subcommand(Subcommand::DivergenceCheck, &options).unwrap();
        std::fs::read_to_string(out.join("divergence.csv")).unwrap()
    };
    assert_eq!(run(1, "x"), run(1, "y"));
    assert_ne!(run(1, "x"), run(2, "z"));
}

#[test]
fn binary_honours_thread_env_and_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = bin()
            .args(["mse-sweep", "--config"])
            .arg(&config)
            .env("N2CE_OUT", &out)
            .env("N2CE_THREADS", threads)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        assert!(String::from_utf8_lossy(&status.stdout).contains("argmin"));
        outputs.push(std::fs::read(out.join("mse_sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn unknown_subcommand_exits_nonzero_with_usage() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn bad_config_writes_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "seed = 1\n[sweep]\nrepeets = 3\n[bias]\nnn = 2\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = bin().args(["mse-sweep", "--config"]).arg(&config).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let record: toml::Table = std::fs::read_to_string(out_dir.join("mse-sweep.error.toml")).unwrap().parse().unwrap();
    assert_eq!(record["status"].as_str(), Some("error"));
    assert_eq!(record["kind"].as_str(), Some("config"));
    assert_eq!(record["subcommand"].as_str(), Some("mse-sweep"));
    let message = record["message"].as_str().unwrap();
    assert!(message.contains("sweep.repeets (line 3)") && message.contains("bias.nn (line 5)"), "{message}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind = \"config\""));
}

#[test]
fn invalid_thread_env_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("divergence-check").arg("--out").arg(dir.path()).env("N2CE_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("N2CE_THREADS"));
}

#[test]
fn invalid_values_surface_as_errors_not_panics() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "[bbo.run]\nqueries = 0\n").unwrap();
    let out = bin().arg("branin").arg("--config").arg(&config).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let record: toml::Table = std::fs::read_to_string(dir.path().join("branin.error.toml")).unwrap().parse().unwrap();
    assert_eq!(record["kind"].as_str(), Some("invalid_argument"));
}
