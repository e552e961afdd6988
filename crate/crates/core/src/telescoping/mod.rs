//! Telescoped ratio estimation. The ratio `q*/q0` is factored into
//! `K + 1` stage ratios between spherically interpolated distributions, all
//! learned by one stage-conditioned network.

mod fit;
mod schedule;

pub use fit::{
    fit_telescoping, stage_objective_and_gradient, telescoping_input_grad, telescoping_log_ratio, SampleConvention,
    TelescopeConfig, TelescopeFit, MAX_NEGATIVES,
};
pub use schedule::{interpolate_stage, SchedulePreset, SigmaSchedule, StageWeights, K3_SIGMA_SQ, K6_SIGMA_SQ};
