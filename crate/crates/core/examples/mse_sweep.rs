//! Trajectory MSE over M for the 5-D problem at a small and a large sample
//! size. Pass `full` for 100 repeats instead of 20.

use n2ce::analysis::{large_n_grid, mse_sweep, small_n_grid};

fn main() -> n2ce::Result<()> {
    let repeats = if std::env::args().any(|a| a == "full") { 100 } else { 20 };
    for (n, grid) in [(2, small_n_grid()), (500, large_n_grid())] {
        let table = mse_sweep(5, n, &grid, repeats, 0)?;
        println!("n = {n}, {repeats} repeats");
        for r in &table.rows {
            println!("  {:>14}  {:>10.4} +- {:<10.4} diverged {}", r.estimator.to_string(), r.mse_mean, r.mse_std, r.diverged);
        }
        println!("  argmin {}", table.argmin().expect("nonempty").estimator);
    }
    Ok(())
}
