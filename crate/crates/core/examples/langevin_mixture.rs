//! Unadjusted Langevin dynamics on a Gaussian mixture and on a standard
//! normal, whose stationary moments are known.

use n2ce::rng;
use n2ce::samplers::{langevin_run, LangevinConfig};
use n2ce::tasks::GmmTarget;
use ndarray::Axis;

fn main() -> n2ce::Result<()> {
    let normal = GmmTarget::uniform(vec![vec![0.0, 0.0]], 1.0)?;
    let init = rng::standard_normal(&mut rng::seeded(1), 5000, 2) * 3.0;
    let out = langevin_run(|z| normal.score(z), init.view(), &LangevinConfig { steps: 2000, step_size: 0.1, seed: 1 })?;
    println!("standard normal: mean {:.3}, variance {:.3}", out.mean_axis(Axis(0)).unwrap(), out.var_axis(Axis(0), 1.0));

    let mixture = GmmTarget::branin_optima();
    let init = rng::standard_normal(&mut rng::seeded(2), 3000, 2) * 4.0 + ndarray::array![2.5, 6.0];
    let out = langevin_run(|z| mixture.score(z), init.view(), &LangevinConfig { steps: 2000, step_size: 0.1, seed: 2 })?;
    for m in &mixture.means {
        let share = out.rows().into_iter().filter(|z| (z[0] - m[0]).hypot(z[1] - m[1]) < 1.5).count() as f64 / out.nrows() as f64;
        println!("mode ({:+.3}, {:+.3}): share {share:.3}", m[0], m[1]);
    }
    Ok(())
}
