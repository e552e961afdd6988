//! Normalized gradient ascent with M = 1000 reaching a delta-ball around the
//! target, compared with the condition-number bound.

use n2ce::analysis::normalized_ascent_converge;
use ndarray::array;

fn main() -> n2ce::Result<()> {
    let r = normalized_ascent_converge(array![-2.0, 1.0].view(), array![1.5, -0.8].view(), 1000.0, 0.05, 0.025, 100_000, 0)?;
    println!("kappa {:.3}", r.kappa);
    println!("bound {} iterations, first hit {:?}, success {}", r.bound, r.first_hit, r.success);
    Ok(())
}
