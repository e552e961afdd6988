//! Gradient-ascent trajectories on the 2-D Gaussian location problem. Larger M
//! tracks the exact maximum-likelihood path more closely.

use n2ce::analysis::{trajectory_run, TrajectoryConfig};
use n2ce::ObjectiveKind;

fn main() -> n2ce::Result<()> {
    let mle = trajectory_run(&TrajectoryConfig::two_d(ObjectiveKind::MleExact))?;
    for kind in [ObjectiveKind::Nce, ObjectiveKind::n2ce(10.0), ObjectiveKind::n2ce(100.0), ObjectiveKind::n2ce(1000.0)] {
        let rec = trajectory_run(&TrajectoryConfig::two_d(kind))?;
        println!(
            "{kind:>10}: mse {:.4}, final distance {:.4}, mean gap to MLE path {:.4}",
            rec.mse,
            rec.final_distance,
            rec.mean_gap(&mle)?
        );
    }
    println!("{:>10}: mse {:.4}", "MLE_EXACT", mle.mse);
    Ok(())
}
