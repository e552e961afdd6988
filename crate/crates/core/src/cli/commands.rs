use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::output::{fmt_float, CsvOut};
use super::Subcommand;
use crate::analysis::{
    gradient_error_vs_m, loglog_slope, mse_sweep, normalized_ascent_converge, optimal_m_scaling_check, run_seed,
    trajectory_run, TrajectoryConfig, HARNESS_NWJ_CAP,
};
use crate::models::{GaussianLocationModel, MlpConfig, MlpRatioModel};
use crate::objectives::{
    d_alpha_quadrature_oracle, d_alpha_variational_estimate, estimator_gradient, n2ce_gradient, n2ce_objective,
    neg_reweight_objective, nce_objective, nwj_objective, sigmoid_form_gradient, sigmoid_form_objective, ObjectiveKind,
};
use crate::samplers::{langevin_run, svgd_run};
use crate::tasks::{bbo_run, branin_dataset};
use crate::telescoping::{fit_telescoping, telescoping_log_ratio, SigmaSchedule};
use crate::{rng, Error, Result};

pub(super) fn run(cmd: Subcommand, config: &ExperimentConfig, dir: &Path, log: &mut Vec<String>) -> Result<Vec<PathBuf>> {
    match cmd {
        Subcommand::Gradcheck => gradcheck(config, dir, log),
        Subcommand::Trajectory => trajectory(config, dir, log),
        Subcommand::BiasDecay => bias_decay(config, dir, log),
        Subcommand::MseSweep => sweep(config, dir, log),
        Subcommand::OptimalM => optimal_m(config, dir, log),
        Subcommand::ConvergeExpfam => converge(config, dir, log),
        Subcommand::DivergenceCheck => divergence(config, dir, log),
        Subcommand::TelescopeFit => telescope(config, dir, log),
        Subcommand::SvgdSample => sample(config, dir, log, true),
        Subcommand::LangevinSample => sample(config, dir, log, false),
        Subcommand::Branin => branin(config, dir, log),
    }
}

fn shifted_normal(stream: &mut rng::Stream, n: usize, mean: ArrayView1<'_, f64>) -> Array2<f64> {
    let mut x = rng::standard_normal(stream, n, mean.len());
    x += &mean;
    x
}

/// `‖a − b‖ / ‖b‖`.
fn vector_rel_err(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let d = &a - &b;
    d.dot(&d).sqrt() / b.dot(&b).sqrt().max(1e-12)
}

fn gradcheck(config: &ExperimentConfig, dir: &Path, log: &mut Vec<String>) -> Result<Vec<PathBuf>> {
    let sec = &config.gradcheck;
    let h = sec.fd_step;
    let mut stream = rng::derive(config.seed, &[0x6763]);
    let target = Array1::from(vec![1.5, -0.8]);
    let pos = shifted_normal(&mut stream, sec.samples, target.view());
    let neg = rng::standard_normal(&mut stream, sec.samples, 2);
    let (p, n) = (pos.view(), neg.view());
    let alpha = [0.4, -0.9];

    let mut out = CsvOut::create(dir, "gradcheck.csv", &["estimator", "model", "max_rel_err", "tolerance", "pass"])?;
    let mut record = |name: String, model: &str, err: f64, tol: f64, log: &mut Vec<String>| -> Result<()> {
        log.push(format!("{name} on {model}: rel err {err:.3e} (tolerance {tol:e})"));
        out.row([name, model.to_owned(), fmt_float(err), fmt_float(tol), (err <= tol).to_string()])
    };

    type Objective<'a> = Box<dyn Fn(&GaussianLocationModel) -> Result<f64> + 'a>;
    let kinds: Vec<(ObjectiveKind, Objective<'_>)> = vec![
        (ObjectiveKind::Nce, Box::new(|m| nce_objective(m, p, n))),
        (ObjectiveKind::n2ce(10.0), Box::new(|m| n2ce_objective(m, p, n, 10.0))),
        (ObjectiveKind::n2ce(1000.0), Box::new(|m| n2ce_objective(m, p, n, 1000.0))),
        (ObjectiveKind::Nwj, Box::new(|m| nwj_objective(m, p, n, HARNESS_NWJ_CAP))),
        (ObjectiveKind::NegReweight { noise_magnitude: 100.0 }, Box::new(|m| neg_reweight_objective(m, p, n, 100.0))),
    ];
    for (kind, objective) in &kinds {
        let g = estimator_gradient(*kind, &GaussianLocationModel::from_slice(&alpha)?, p, n, HARNESS_NWJ_CAP)?;
        let fd = fd_gaussian(&alpha, h, objective)?;
        record(kind.to_string(), "gaussian", vector_rel_err(g.vector.view(), fd.view()), 1e-6, log)?;
    }
    let g = sigmoid_form_gradient(&GaussianLocationModel::from_slice(&alpha)?, p, n, 100.0)?;
    let fd = fd_gaussian(&alpha, h, &|m: &GaussianLocationModel| sigmoid_form_objective(m, p, n, 100.0))?;
    record("SIGMOID:100".into(), "gaussian", vector_rel_err(g.vector.view(), fd.view()), 1e-6, log)?;

    // Network: per-coordinate relative error on a random subset of parameters.
    let mlp_cfg = MlpConfig { input_dim: 2, hidden_width: 16, num_resblocks: 2, num_stages: 3 };
    let mut mlp = MlpRatioModel::init(mlp_cfg, &mut stream)?;
    let stage = 1;
    let m = 100.0;
    let g = n2ce_gradient(&mlp.at_stage(stage)?, p, n, m)?;
    let coords = sample_indices(&mut stream, mlp.num_params(), sec.mlp_coordinates.min(mlp.num_params()));
    let mut worst = 0.0f64;
    for j in coords.into_iter() {
        let base = mlp.params()[j];
        mlp.params_mut()[j] = base + h;
        let up = n2ce_objective(&mlp.at_stage(stage)?, p, n, m)?;
        mlp.params_mut()[j] = base - h;
        let down = n2ce_objective(&mlp.at_stage(stage)?, p, n, m)?;
        mlp.params_mut()[j] = base;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g.vector[j]).abs() / g.vector[j].abs().max(1e-3));
    }
    record(ObjectiveKind::n2ce(m).to_string(), "mlp", worst, 1e-4, log)?;
    Ok(vec![out.finish()?])
}

fn fd_gaussian(alpha: &[f64], h: f64, objective: &dyn Fn(&GaussianLocationModel) -> Result<f64>) -> Result<Array1<f64>> {
    (0..alpha.len())
        .map(|j| {
            let mut up = alpha.to_vec();
            up[j] += h;
            let mut down = alpha.to_vec();
            down[j] -= h;
            Ok((objective(&GaussianLocationModel::from_slice(&up)?)? - objective(&GaussianLocationModel::from_slice(&down)?)?) / (2.0 * h))
        })
        .collect::<Result<Vec<f64>>>()
        .map(Array1::from)
}

fn trajectory(config: &ExperimentConfig, dir: &Path, log: &mut Vec<String>) -> Result<Vec<PathBuf>> {
    let sec = &config.trajectory;
    if sec.estimators.is_empty() || sec.repeats == 0 {
        return Err(Error::invalid("trajectory needs estimators and repeats >= 1"));
    }
    let jobs: Vec<(usize, usize)> = (0..sec.estimators.len()).flat_map(|e| (0..sec.repeats).map(move |r| (e, r))).collect();
    let records = jobs
        .par_iter()
        .map(|&(e, r)| {
            let cfg = TrajectoryConfig { estimator: sec.estimators[e], seed: run_seed(config.seed, r), ..sec.run.clone() };
            trajectory_run(&cfg)
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut out = CsvOut::create(dir, "trajectory.csv", &["run_id", "iter", "distance", "grad_error"])?;
    for (&(e, r), rec) in jobs.iter().zip(&records) {
        let run_id = format!("{}/{r}", sec.estimators[e]);
        for (t, (d, g)) in rec.distances.iter().zip(&rec.grad_errors).enumerate() {
            out.row([run_id.clone(), t.to_string(), fmt_float(*d), fmt_float(*g)])?;
        }
    }
    let mut summary = CsvOut::create(
        dir,
        "trajectory_summary.csv",
        &["estimator", "repeats", "final_distance_mean", "final_distance_stderr", "mse_mean", "mle_gap_mean"],
    )?;
    let mle = sec.estimators.iter().position(|k| *k == ObjectiveKind::MleExact);
    for (e, kind) in sec.estimators.iter().enumerate() {
        let runs = &records[e * sec.repeats..(e + 1) * sec.repeats];
        let finals: Vec<f64> = runs.iter().map(|r| r.final_distance).collect();
        let (mean, sd) = mean_sd(&finals);
        let mse = runs.iter().map(|r| r.mse).sum::<f64>() / runs.len() as f64;
        let gap = match mle {
            Some(i) => {
                let reference = &records[i * sec.repeats..(i + 1) * sec.repeats];
                let gaps = runs.iter().zip(reference).map(|(a, b)| a.mean_gap(b)).collect::<Result<Vec<f64>>>()?;
                fmt_float(gaps.iter().sum::<f64>() / gaps.len() as f64)
            }
            None => String::new(),
        };
        let stderr = sd / (sec.repeats as f64).sqrt();
        log.push(format!("{kind}: final distance {mean:.5} +- {stderr:.5}, mse {mse:.5}"));
        summary.row([kind.to_string(), sec.repeats.to_string(), fmt_float(mean), fmt_float(stderr), fmt_float(mse), gap])?;
    }
    Ok(vec![out.finish()?, summary.finish()?])
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    (mean, (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn bias_decay(config: &ExperimentConfig, dir: &Path, log: &mut Vec<String>) -> Result<Vec<PathBuf>> {
    let sec = &config.bias;
    let alpha = Array1::from(sec.alpha.clone());
    let target = Array1::from(sec.target.clone());
    let rows = gradient_error_vs_m(alpha.view(), target.view(), &sec.m_grid, sec.n, sec.repeats, config.seed)?;
    let mut out = CsvOut::create(dir, "bias_decay.csv", &["M", "grad_error_mean", "grad_error_stderr"])?;
    for r in &rows {
        out.row([fmt_float(r.m), fmt_float(r.mean), fmt_float(r.stderr)])?;
    }
    let ms: Vec<f64> = rows.iter().map(|r| r.m).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    if rows.len() >= 2 {
        log.push(format!("slope = {}", fmt_float(loglog_slope(&ms, &errs)?)));
    }
    Ok(vec![out.finish()?])
}

fn sweep(config: &ExperimentConfig, dir: &Path, log: &mut Vec<String>) -> Result<Vec<PathBuf>> {
    let sec = &config.sweep;
    let table = mse_sweep(sec.dim, sec.n, &sec.grid, sec.repeats, config.seed)?;
    let mut out = CsvOut::create(dir, "mse_sweep.csv", &["estimator", "M", "n", "repeats", "mse_mean", "mse_std"])?;
    for r in &table.rows {
        let m = r.m().map(fmt_float).unwrap_or_default();
        out.row([r.estimator.tag().to_owned(), m, r.n.to_string(), r.repeats.to_string(), fmt_float(r.mse_mean), fmt_float(r.mse_std)])?;
        if r.diverged > 0 {
            log.push(format!("{}: {} of {} runs diverged and count as inf", r.estimator, r.diverged, r.repeats));
        }
    }
    if let Some(best) = table.argmin() {
        log.push(format!("argmin = {} (mse {:.5})", best.estimator, best.mse_mean));
    }
    Ok(vec![out.finish()?])
}

fn optimal_m(config: &ExperimentConfig, dir: &Path, log: &mut Vec<String>) -> Result<Vec<PathBuf>> {
    let sec = &config.sweep;
    let rows = optimal_m_scaling_check(&sec.scaling_ns, &sec.scaling_grid, sec.scaling_repeats, config.seed)?;
    let mut out = CsvOut::create(dir, "optimal_m.csv", &["n", "argmin_M", "mse_mean", "lower", "upper", "within", "vacuous"])?;
    for r in &rows {
        log.push(format!("n = {}: argmin M = {} in [{:.3}, {:.3}]: {}", r.n, r.argmin_m, r.lower, r.upper, r.within));
        out.row([
            r.n.to_string(),
            fmt_float(r.argmin_m),
            fmt_float(r.mse_mean),
            fmt_float(r.lower),
            fmt_float(r.upper),
            r.within.to_string(),
            r.vacuous.to_string(),
        ])?;
    }
    Ok(vec![out.finish()?])
}

fn converge(config: &ExperimentConfig, dir: &Path, log: &mut Vec<String>) -> Result<Vec<PathBuf>> {
    let sec = &config.converge;
    let a0 = Array1::from(sec.alpha0.clone());
    let target = Array1::from(sec.target.clone());
    let r = normalized_ascent_converge(a0.view(), target.view(), sec.m, sec.delta, sec.step, sec.n, config.seed)?;
    let mut out = CsvOut::create(dir, "converge.csv", &["kappa", "delta", "bound", "first_hit", "success"])?;
    out.row([
        fmt_float(r.kappa),
        fmt_float(r.delta),
        r.bound.to_string(),
        r.first_hit.map(|t| t.to_string()).unwrap_or_default(),
        r.success.to_string(),
    ])?;
    log.push(format!("kappa = {:.4}, bound = {}, first hit = {:?}, stalls = {}", r.kappa, r.bound, r.first_hit, r.stall_events.len()));
    if r.iterations_run < r.bound && !r.success {
        log.push(format!("budget capped at {} iterations", r.iterations_run));
    }
    Ok(vec![out.finish()?])
}

fn divergence(config: &ExperimentConfig, dir: &Path, log: &mut Vec<String>) -> Result<Vec<PathBuf>> {
    let sec = &config.divergence;
    let shift = Array1::from(sec.shift.clone());
    let zero = Array1::zeros(shift.len());
    let model = GaussianLocationModel::new(shift.clone())?;
    let mut stream = rng::derive(config.seed, &[0x6469_76]);
    let pos = shifted_normal(&mut stream, sec.n, shift.view());
    let neg = rng::standard_normal(&mut stream, sec.n, shift.len());
    let mut out = CsvOut::create(dir, "divergence.csv", &["M", "alpha", "mc_bound", "quadrature", "stderr"])?;
    for &m in &sec.m_grid {
        let est = d_alpha_variational_estimate(&model, pos.view(), neg.view(), m)?;
        let quad = d_alpha_quadrature_oracle(shift.view(), zero.view(), m)?;
        log.push(format!("M = {m}: mc {:.6} +- {:.6}, quadrature {quad:.6}", est.value, est.stderr));
        out.row([fmt_float(m), fmt_float(m / (1.0 + m)), fmt_float(est.value), fmt_float(quad), fmt_float(est.stderr)])?;
    }
    Ok(vec![out.finish()?])
}

fn telescope(config: &ExperimentConfig, dir: &Path, log: &mut Vec<String>) -> Result<Vec<PathBuf>> {
    let sec = &config.telescoping;
    let mean = Array1::from(sec.target_mean.clone());
    if mean.len() != 2 {
        return Err(Error::invalid("telescope-fit evaluates on a 2-D grid; target_mean must have length 2"));
    }
    if sec.grid_points < 2 || !(sec.grid_lo < sec.grid_hi) {
        return Err(Error::invalid("grid needs at least 2 points and grid_lo < grid_hi"));
    }
    let schedule = SigmaSchedule::preset(sec.schedule);
    let mlp = MlpConfig { input_dim: 2, hidden_width: sec.hidden_width, num_resblocks: sec.num_resblocks, num_stages: schedule.num_stages() };
    let init = MlpRatioModel::init(mlp, &mut rng::derive(config.seed, &[0x696e_6974]))?;
    let fit = fit_telescoping(|n, s: &mut rng::Stream| Ok(shifted_normal(s, n, mean.view())), &schedule, init, &sec.fit)?;

    let g = sec.grid_points;
    let step = (sec.grid_hi - sec.grid_lo) / (g - 1) as f64;
    let zs = Array2::from_shape_fn((g * g, 2), |(i, k)| sec.grid_lo + step * if k == 0 { i / g } else { i % g } as f64);
    let f = telescoping_log_ratio(&fit.model, zs.view())?;
    let half_sq = 0.5 * mean.dot(&mean);
    let truth: Vec<f64> = zs.rows().into_iter().map(|z| z.dot(&mean) - half_sq).collect();
    let mut grid = CsvOut::create(dir, "telescope_grid.csv", &["z1", "z2", "log_ratio", "true_log_ratio"])?;
    for ((z, fv), t) in zs.rows().into_iter().zip(f.iter()).zip(&truth) {
        grid.row([fmt_float(z[0]), fmt_float(z[1]), fmt_float(*fv), fmt_float(*t)])?;
    }
    let mut loss = CsvOut::create(dir, "telescope_loss.csv", &["iter", "stage", "loss"])?;
    for (i, (l, k)) in fit.loss_trace.iter().zip(&fit.stages).enumerate() {
        loss.row([i.to_string(), k.to_string(), fmt_float(*l)])?;
    }
    let r = pearson(f.as_slice().expect("contiguous"), &truth);
    log.push(format!("grid pearson = {}", fmt_float(r)));
    Ok(vec![grid.finish()?, loss.finish()?])
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn sample(config: &ExperimentConfig, dir: &Path, log: &mut Vec<String>, svgd: bool) -> Result<Vec<PathBuf>> {
    let sec = &config.sampler;
    sec.target.validate()?;
    let d = sec.target.dim();
    let score = |zs: ArrayView2<'_, f64>| sec.target.score(zs);
    let mut files = Vec::new();
    let (particles, name) = if svgd {
        let init = rng::standard_normal(&mut rng::derive(config.seed, &[0x7376]), sec.svgd.particle_count, d);
        let (z, trace) = svgd_run(score, init.view(), &sec.svgd)?;
        if trace.single_particle {
            log.push("single particle: no repulsion, plain adaptive ascent".into());
        }
        let mut bw = CsvOut::create(dir, "svgd_bandwidth.csv", &["step", "h2"])?;
        for (t, h2) in trace.bandwidths.iter().enumerate() {
            bw.row([t.to_string(), fmt_float(*h2)])?;
        }
        files.push(bw.finish()?);
        (z, "svgd_samples.csv")
    } else {
        let init = rng::standard_normal(&mut rng::derive(config.seed, &[0x6c64]), sec.langevin_particles, d);
        (langevin_run(score, init.view(), &sec.langevin)?, "langevin_samples.csv")
    };
    let header: Vec<String> = std::iter::once("particle".to_owned()).chain((1..=d).map(|k| format!("z{k}"))).collect();
    let mut out = CsvOut::create(dir, name, &header.iter().map(String::as_str).collect::<Vec<_>>())?;
    for (i, z) in particles.rows().into_iter().enumerate() {
        out.row(std::iter::once(i.to_string()).chain(z.iter().map(|v| fmt_float(*v))))?;
    }
    for (c, mean) in sec.target.means.iter().enumerate() {
        let near = particles
            .rows()
            .into_iter()
            .filter(|z| z.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= 0.5)
            .count();
        log.push(format!("mode {c}: {near} of {} particles within 0.5", particles.nrows()));
    }
    files.insert(0, out.finish()?);
    Ok(files)
}

fn branin(config: &ExperimentConfig, dir: &Path, log: &mut Vec<String>) -> Result<Vec<PathBuf>> {
    let sec = &config.bbo;
    if sec.seeds == 0 {
        return Err(Error::invalid("branin needs seeds >= 1"));
    }
    let results = (0..sec.seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = config.seed.wrapping_add(i);
            let task = branin_dataset(sec.dataset_size, sec.remove_top_fraction, seed)?;
            let run = bbo_run(&task, &crate::tasks::BboConfig { seed, ..sec.run.clone() })?;
            Ok((seed, run))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut out = CsvOut::create(dir, "branin.csv", &["seed", "Q", "best_value", "y_max_dataset"])?;
    let mut cands = CsvOut::create(dir, "branin_candidates.csv", &["seed", "x1", "x2", "value"])?;
    for (seed, r) in &results {
        log.push(format!("seed {seed}: best {:.4}, dataset max {:.4}, regressor rmse {:.4}", r.best_value, r.y_max_dataset, r.regressor_rmse));
        out.row([seed.to_string(), r.queries_used.to_string(), fmt_float(r.best_value), fmt_float(r.y_max_dataset)])?;
        for (x, v) in r.candidates.rows().into_iter().zip(&r.values) {
            cands.row([seed.to_string(), fmt_float(x[0]), fmt_float(x[1]), fmt_float(*v)])?;
        }
    }
    Ok(vec![out.finish()?, cands.finish()?])
}
