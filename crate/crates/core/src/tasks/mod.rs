//! Desk-scale targets: Gaussian mixtures, the Branin function and a
//! simplified offline optimizer for it.

mod bbo;
mod branin;
mod energy;
mod gmm;

pub use bbo::{bbo_run, fit_regressor, BboConfig, BboResult, RegressorConfig, SamplerKind};
pub use branin::{
    branin_dataset, branin_value, clip_to_domain, BraninTask, BRANIN_DOMAIN, BRANIN_MAXIMA, BRANIN_MAX_VALUE,
};
pub use energy::{conditional_logdensity, conditional_logdensity_grad, ConditionalEnergy, Field, FieldGrad, FD_STEP};
pub use gmm::{gmm_logdensity, GmmTarget};
