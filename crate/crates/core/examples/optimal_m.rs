//! Where the best M falls relative to the [sqrt n, 10 sqrt n] bracket.

use n2ce::analysis::{geometric_m_grid, optimal_m_scaling_check};

fn main() -> n2ce::Result<()> {
    for row in optimal_m_scaling_check(&[2, 50, 500], &geometric_m_grid(), 30, 0)? {
        println!(
            "n = {:>3}: best M = {:>5} (mse {:.4}), bracket [{:.2}, {:.2}], inside: {}",
            row.n, row.argmin_m, row.mse_mean, row.lower, row.upper, row.within
        );
    }
    Ok(())
}
