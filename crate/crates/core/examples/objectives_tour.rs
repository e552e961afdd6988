//! Every objective and its gradient on one batch, showing the M = 1 reduction
//! to NCE and the classifier form of the scaled objective.

use n2ce::objectives::{
    n2ce_gradient, n2ce_objective, nce_objective, neg_reweight_gradient, nwj_gradient, nwj_objective,
    sigmoid_form_objective, DEFAULT_NWJ_CAP,
};
use n2ce::{rng, GaussianLocationModel};

fn main() -> n2ce::Result<()> {
    let mut stream = rng::seeded(7);
    let mut pos = rng::standard_normal(&mut stream, 4000, 2);
    pos += &ndarray::array![1.5, -0.8];
    let neg = rng::standard_normal(&mut stream, 4000, 2);
    let model = GaussianLocationModel::from_slice(&[0.5, 0.0])?;
    let (p, n) = (pos.view(), neg.view());

    println!("NCE objective          {:+.10}", nce_objective(&model, p, n)?);
    println!("N2CE objective at M=1  {:+.10}", n2ce_objective(&model, p, n, 1.0)?);
    for m in [1.0, 10.0, 100.0, 1e4] {
        let direct = n2ce_objective(&model, p, n, m)?;
        let classifier = sigmoid_form_objective(&model, p, n, m)?;
        let g = n2ce_gradient(&model, p, n, m)?;
        let g_neg = neg_reweight_gradient(&model, p, n, m)?;
        println!(
            "M = {m:>7}: L = {direct:+.6} (sigmoid form {classifier:+.6}), grad {:.4}, negative-only reweight grad {:.4}",
            g.vector, g_neg.vector
        );
    }
    println!("NWJ objective {:+.6}, grad {:.4}", nwj_objective(&model, p, n, DEFAULT_NWJ_CAP)?, nwj_gradient(&model, p, n, DEFAULT_NWJ_CAP)?.vector);
    println!("exact MLE direction {:.4}", n2ce::objectives::mle_gradient_oracle(&model, ndarray::array![1.5, -0.8].view())?);
    Ok(())
}
