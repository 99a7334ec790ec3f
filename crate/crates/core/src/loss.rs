//! Activation functions, losses and the error signal used by the update rules.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Smallest probability fed to `ln`; probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-16;

/// Activation + loss pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Identity activation, squared error.
    L2Identity,
    /// Sigmoid activation, negative log-likelihood.
    Logistic,
    /// Identity activation, smoothed hinge on `(2r - 1) y`.
    SmoothedHinge,
}

impl LossKind {
    pub fn code(self) -> u8 {
        match self {
            LossKind::L2Identity => 0,
            LossKind::Logistic => 1,
            LossKind::SmoothedHinge => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LossKind::L2Identity),
            1 => Some(LossKind::Logistic),
            2 => Some(LossKind::SmoothedHinge),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::L2Identity => "l2",
            LossKind::Logistic => "logistic",
            LossKind::SmoothedHinge => "hinge",
        }
    }

    fn requires_binary_label(self) -> bool {
        !matches!(self, LossKind::L2Identity)
    }

    pub fn check_label(self, label: f64) -> Result<()> {
        if self.requires_binary_label() && label != 0.0 && label != 1.0 {
            return Err(Error::InvalidLabel { label, loss: self });
        }
        Ok(())
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" | "l2_identity" => Ok(LossKind::L2Identity),
            "logistic" => Ok(LossKind::Logistic),
            "hinge" | "smoothed_hinge" => Ok(LossKind::SmoothedHinge),
            other => Err(Error::Config(format!(
                "unknown loss `{other}` (expected l2, logistic or hinge)"
            ))),
        }
    }
}

/// Raw score `y` and activated output `f(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub raw: f64,
    pub activated: f64,
}

impl Prediction {
    pub fn new(kind: LossKind, raw: f64) -> Self {
        Prediction {
            raw,
            activated: activate(kind, raw),
        }
    }
}

pub fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

pub fn activate(kind: LossKind, y: f64) -> f64 {
    match kind {
        LossKind::Logistic => sigmoid(y),
        LossKind::L2Identity | LossKind::SmoothedHinge => y,
    }
}

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

pub(crate) fn log_loss(label: f64, p: f64) -> f64 {
    let p = clamp_probability(p);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Smoothed hinge `h(z)`.
pub fn smoothed_hinge(z: f64) -> f64 {
    if z <= 0.0 {
        0.5 - z
    } else if z < 1.0 {
        0.5 * (1.0 - z) * (1.0 - z)
    } else {
        0.0
    }
}

/// Derivative `h'(z)`; the `z <= 0` and `z >= 1` branches are closed.
pub fn smoothed_hinge_derivative(z: f64) -> f64 {
    if z <= 0.0 {
        -1.0
    } else if z < 1.0 {
        -(1.0 - z)
    } else {
        0.0
    }
}

/// Loss without regularization.
pub fn loss(kind: LossKind, label: f64, pred: Prediction) -> Result<f64> {
    kind.check_label(label)?;
    Ok(match kind {
        LossKind::L2Identity => {
            let d = label - pred.activated;
            d * d
        }
        LossKind::Logistic => log_loss(label, pred.activated),
        LossKind::SmoothedHinge => smoothed_hinge((2.0 * label - 1.0) * pred.raw),
    })
}

/// The error signal `ê` plugged into the additive update rules.
///
/// For L2 and logistic this is `r - f(y)`; for L2 that is the negative derivative of
/// half the squared error (the factor two is absorbed by the learning rate). For the
/// smoothed hinge it is `-(2r - 1) h'((2r - 1) y)`.
pub fn gradient_scalar(kind: LossKind, label: f64, pred: Prediction) -> Result<f64> {
    kind.check_label(label)?;
    Ok(match kind {
        LossKind::L2Identity | LossKind::Logistic => label - pred.activated,
        LossKind::SmoothedHinge => {
            let sign = 2.0 * label - 1.0;
            -sign * smoothed_hinge_derivative(sign * pred.raw)
        }
    })
}
