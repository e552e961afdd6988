//! Offline optimization of the Branin function: learn a prior over good
//! designs, tilt it toward the best observed value and spend 128 queries.

use n2ce::tasks::{bbo_run, branin_dataset, BboConfig, BRANIN_MAX_VALUE};

fn main() -> n2ce::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let task = branin_dataset(5000, 0.1, seed)?;
    let result = bbo_run(&task, &BboConfig { seed, ..BboConfig::default() })?;
    println!("dataset maximum   {:.4}", task.y_max);
    println!("best query        {:.4} at ({:.3}, {:.3})", result.best_value, result.best_x[0], result.best_x[1]);
    println!("global maximum    {BRANIN_MAX_VALUE:.4}");
    println!("queries used      {}", result.queries_used);
    println!("regressor RMSE    {:.4}", result.regressor_rmse);
    Ok(())
}
