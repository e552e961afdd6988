//! Gradient error of the scaled estimator against the exact gradient as M
//! grows, with the log-log slope of the decay.

use n2ce::analysis::{gradient_error_vs_m, loglog_slope};
use ndarray::array;

fn main() -> n2ce::Result<()> {
    let alpha = array![-2.0, 1.0];
    let target = array![1.5, -0.8];
    let grid = [10.0, 30.0, 100.0, 300.0, 1000.0];
    let rows = gradient_error_vs_m(alpha.view(), target.view(), &grid, 200_000, 4, 0)?;
    for r in &rows {
        println!("M = {:>6}: error {:.5} +- {:.5}", r.m, r.mean, r.stderr);
    }
    let errs: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    println!("log-log slope {:.3}", loglog_slope(&grid, &errs)?);
    Ok(())
}
