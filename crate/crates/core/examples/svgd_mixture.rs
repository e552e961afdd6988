//! SVGD on a three-mode mixture: particles split across the modes instead of
//! collapsing into one.

use n2ce::cli::three_mode_target;
use n2ce::rng;
use n2ce::samplers::{svgd_run, SvgdConfig};

fn main() -> n2ce::Result<()> {
    let target = three_mode_target();
    let config = SvgdConfig::default();
    let init = rng::standard_normal(&mut rng::seeded(0), config.particle_count, 2);
    let (particles, trace) = svgd_run(|z| target.score(z), init.view(), &config)?;
    for mean in &target.means {
        let near = particles.rows().into_iter().filter(|z| ((z[0] - mean[0]).powi(2) + (z[1] - mean[1]).powi(2)).sqrt() <= 0.5).count();
        println!("mode ({:+.2}, {:+.2}): {near} of {} particles within 0.5", mean[0], mean[1], particles.nrows());
    }
    println!("bandwidth h^2: first {:.4}, last {:.4}", trace.bandwidths[0], trace.bandwidths.last().unwrap());
    Ok(())
}
