//! The stage-conditioned ratio network: forward pass, parameter gradient and
//! a few Adam steps on the scaled objective.

use n2ce::objectives::{n2ce_gradient, n2ce_objective};
use n2ce::{rng, AdamConfig, AdamState, MlpConfig, MlpRatioModel};

fn main() -> n2ce::Result<()> {
    let mut stream = rng::seeded(5);
    let mut model = MlpRatioModel::init(MlpConfig { input_dim: 2, hidden_width: 32, num_resblocks: 2, num_stages: 1 }, &mut stream)?;
    println!("{} parameters", model.num_params());
    let z = ndarray::array![0.3, -0.2];
    println!("f(z) = {:.5}, |df/dtheta| = {:.5}", model.forward(z.view(), 0)?, model.param_grad(z.view(), 0)?.mapv(|g| g * g).sum().sqrt());

    let mut adam = AdamState::new(AdamConfig::with_lr(1e-2), model.num_params())?;
    for step in 0..=300 {
        let pos = rng::standard_normal(&mut stream, 256, 2) + 1.0;
        let neg = rng::standard_normal(&mut stream, 256, 2);
        let g = n2ce_gradient(&model.at_stage(0)?, pos.view(), neg.view(), 10.0)?;
        if step % 100 == 0 {
            println!("step {step}: objective {:.4}", n2ce_objective(&model.at_stage(0)?, pos.view(), neg.view(), 10.0)?);
        }
        adam.step(model.params_mut(), g.vector.view(), true)?;
    }
    // Exact log-ratio at the origin is -‖(1, 1)‖²/2 = -1.
    println!("f(0) = {:.3} (exact -1)", model.forward(ndarray::array![0.0, 0.0].view(), 0)?);
    Ok(())
}
