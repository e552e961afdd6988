//! Multi-stage ratio estimation of N((2, 2), I) against N(0, I) with the
//! three-stage schedule, compared with the exact log-ratio on a grid.

use n2ce::telescoping::{fit_telescoping, telescoping_log_ratio, SchedulePreset, SigmaSchedule, TelescopeConfig};
use n2ce::{rng, MlpConfig, MlpRatioModel};
use ndarray::Array2;

fn main() -> n2ce::Result<()> {
    let schedule = SigmaSchedule::preset(SchedulePreset::K3);
    let config = MlpConfig { input_dim: 2, hidden_width: 32, num_resblocks: 3, num_stages: schedule.num_stages() };
    let model = MlpRatioModel::init(config, &mut rng::seeded(1))?;
    let fit_config = TelescopeConfig { iterations: 1000, ..TelescopeConfig::default() };
    let target = |n: usize, s: &mut rng::Stream| Ok(rng::standard_normal(s, n, 2) + 2.0);
    let fit = fit_telescoping(target, &schedule, model, &fit_config)?;

    let grid = Array2::from_shape_fn((25, 2), |(i, k)| -2.0 + if k == 0 { (i / 5) as f64 } else { (i % 5) as f64 } * 1.5);
    let est = telescoping_log_ratio(&fit.model, grid.view())?;
    for (z, f) in grid.rows().into_iter().zip(est.iter()) {
        let exact = 2.0 * (z[0] + z[1]) - 4.0;
        println!("z = ({:+.1}, {:+.1}): estimate {f:+7.3}, exact {exact:+7.3}", z[0], z[1]);
    }
    Ok(())
}
