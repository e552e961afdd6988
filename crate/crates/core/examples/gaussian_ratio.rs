//! Closed-form log-ratio of the Gaussian location family against `N(0, I)`,
//! checked against the two densities it relates.

use n2ce::{GaussianLocationModel, RatioModel};
use ndarray::array;

fn log_normal(x: &[f64], mean: &[f64]) -> f64 {
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum();
    -0.5 * sq - 0.5 * x.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn main() -> n2ce::Result<()> {
    let model = GaussianLocationModel::from_slice(&[1.5, -0.8])?;
    let xs = array![[0.0, 0.0], [1.5, -0.8], [-1.0, 2.0]];
    let f = model.log_ratio(xs.view())?;
    for (x, fx) in xs.rows().into_iter().zip(f.iter()) {
        let direct = log_normal(x.as_slice().unwrap(), &[1.5, -0.8]) - log_normal(x.as_slice().unwrap(), &[0.0, 0.0]);
        println!("x = {x}: f = {fx:+.6}, log N(x; a) - log N(x; 0) = {direct:+.6}");
    }
    // The parameter gradient of f at x is x - a.
    println!("grad at x = (0, 0): {}", model.grad_log_ratio_at(array![0.0, 0.0].view())?);
    Ok(())
}
