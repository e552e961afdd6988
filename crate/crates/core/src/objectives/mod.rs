//! Objectives and gradient estimators of the noise-scaled NCE family.
//!
//! All ratio arithmetic runs on `f = log r` through `softplus`/`sigmoid`, so
//! extreme ratios never overflow. Raw `r = exp(f)` is only formed by the NWJ
//! estimator, under an explicit cap.

mod divergence;
mod estimators;

pub use divergence::{
    binary_entropy, binary_entropy_with_endpoints, d_alpha_quadrature_oracle, d_alpha_variational_estimate,
    d_alpha_variational_value,
    divergence_offset, gaussian_kl, js_divergence_direct, DivergenceEstimate,
};
pub use estimators::{
    estimator_gradient, mle_gradient_oracle, n2ce_gradient, n2ce_gradient_regularized, n2ce_objective,
    n2ce_objective_regularized, n2ce_terms, neg_reweight_gradient, neg_reweight_objective, nce_objective,
    nwj_gradient, nwj_objective, sigmoid_form_gradient, sigmoid_form_objective, sigmoid_form_stage_gradient,
    weight_fn, DEFAULT_NWJ_CAP,
};

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Which estimator drives a gradient step.
///
/// Textual form (used in configs and CSVs): `NCE`, `N2CE:<M>`, `NWJ`,
/// `NEG_REWEIGHT:<M>`, `MLE_EXACT`. A bare number parses as `N2CE:<M>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    Nce,
    N2ce { noise_magnitude: f64 },
    Nwj,
    NegReweight { noise_magnitude: f64 },
    MleExact,
}

impl ObjectiveKind {
    pub fn n2ce(m: f64) -> Self {
        ObjectiveKind::N2ce { noise_magnitude: m }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ObjectiveKind::Nce => "NCE",
            ObjectiveKind::N2ce { .. } => "N2CE",
            ObjectiveKind::Nwj => "NWJ",
            ObjectiveKind::NegReweight { .. } => "NEG_REWEIGHT",
            ObjectiveKind::MleExact => "MLE_EXACT",
        }
    }

    /// `M` for the scaled-noise estimators; NCE reports 1.
    pub fn noise_magnitude(&self) -> Option<f64> {
        match *self {
            ObjectiveKind::Nce => Some(1.0),
            ObjectiveKind::N2ce { noise_magnitude } | ObjectiveKind::NegReweight { noise_magnitude } => {
                Some(noise_magnitude)
            }
            ObjectiveKind::Nwj | ObjectiveKind::MleExact => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ObjectiveKind::N2ce { noise_magnitude: m } | ObjectiveKind::NegReweight { noise_magnitude: m } = *self {
            if !(m >= 1.0) || !m.is_finite() {
                return Err(Error::invalid(format!("{} needs finite M >= 1, got {m}", self.tag())));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.noise_magnitude() {
            Some(m) if !matches!(self, ObjectiveKind::Nce) => write!(f, "{}:{}", self.tag(), m),
            _ => f.write_str(self.tag()),
        }
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse_m = |v: &str| {
            v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad noise magnitude {v:?} in {s:?}")))
        };
        let kind = match s.split_once(':') {
            Some(("N2CE", m)) => ObjectiveKind::N2ce { noise_magnitude: parse_m(m)? },
            Some(("NEG_REWEIGHT", m)) => ObjectiveKind::NegReweight { noise_magnitude: parse_m(m)? },
            Some(_) => return Err(Error::Config(format!("unknown estimator {s:?}"))),
            None => match s {
                "NCE" => ObjectiveKind::Nce,
                "NWJ" => ObjectiveKind::Nwj,
                "MLE_EXACT" => ObjectiveKind::MleExact,
                other => ObjectiveKind::N2ce { noise_magnitude: parse_m(other)? },
            },
        };
        kind.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(kind)
    }
}

impl Serialize for ObjectiveKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ObjectiveKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A parameter-space gradient estimate with the sample counts behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub vector: Array1<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl GradEstimate {
    pub fn new(vector: Array1<f64>, n_pos: usize, n_neg: usize) -> Result<Self> {
        if let Some(i) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEstimate(format!("gradient entry {i} is {}", vector[i])));
        }
        Ok(Self { vector, n_pos, n_neg })
    }

    pub fn norm(&self) -> f64 {
        self.vector.dot(&self.vector).sqrt()
    }
}
