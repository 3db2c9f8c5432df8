//! The binary-inducing ELB regularizer and its proximal maps.
//!
//! The regularizer is the element-wise minimum of two elastic nets, one
//! centred at 0 and one at 1:
//!
//! ```text
//! r(x) = min{ κ|x| + λx², κ|x-1| + λ(x-1)² }
//! ```
//!
//! [`prox_elb`] is the closed-form proximal map of the ELB written with a
//! half-weighted quadratic, `argmin_y ½(x-y)² + min{κ|y| + ½λy², …}`,
//! so a caller that wants the prox of `η·r` passes `(ηκ, 2ηλ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FactorMatrix;

/// L1/L2 weights of the ELB regularizer and the per-iteration growth of
/// the L2 weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    pub kappa: f64,
    pub lambda: f64,
    pub growth: f64,
}

impl Default for RegularizationParams {
    fn default() -> Self {
        Self {
            kappa: 0.001,
            lambda: 0.1,
            growth: 1.05,
        }
    }
}

impl RegularizationParams {
    pub fn new(kappa: f64, lambda: f64, growth: f64) -> Result<Self> {
        let p = Self {
            kappa,
            lambda,
            growth,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::invalid(format!("kappa must be finite and >= 0, got {}", self.kappa)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.growth.is_finite() && self.growth >= 1.0) {
            return Err(Error::invalid(format!("growth must be finite and >= 1, got {}", self.growth)));
        }
        Ok(())
    }

    /// `λ_t = λ · growth^t`.
    pub fn lambda_at(&self, t: usize) -> f64 {
        self.lambda * self.growth.powf(t as f64)
    }

    /// Same κ with the L2 weight pinned to its value at iteration `t`.
    pub fn at(&self, t: usize) -> Self {
        Self {
            kappa: self.kappa,
            lambda: self.lambda_at(t),
            growth: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityParams {
    pub gamma: f64,
}

impl ProximityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    sign(x) * (x.abs() - t).max(0.0)
}

/// Scalar ELB regularizer value.
#[inline]
pub fn elb_scalar(x: f64, kappa: f64, lambda: f64) -> f64 {
    let near_zero = kappa * x.abs() + lambda * x * x;
    let near_one = kappa * (x - 1.0).abs() + lambda * (x - 1.0) * (x - 1.0);
    near_zero.min(near_one)
}

pub fn elb_value(x: &FactorMatrix, p: &RegularizationParams) -> Result<f64> {
    x.check_finite("elb_value")?;
    Ok(x.as_slice()
        .iter()
        .map(|&v| elb_scalar(v, p.kappa, p.lambda))
        .sum())
}

/// Scalar Boolean proximal step. Inputs at or below ½ are shrunk toward 0,
/// inputs above ½ toward 1.
#[inline]
pub fn prox_elb_scalar(x: f64, kappa: f64, lambda: f64) -> f64 {
    if x <= 0.5 {
        soft_threshold(x, kappa) / (1.0 + lambda)
    } else {
        1.0 + soft_threshold(x - 1.0, kappa) / (1.0 + lambda)
    }
}

/// Element-wise [`prox_elb_scalar`] with already scaled parameters.
pub fn prox_elb(x: &FactorMatrix, kappa: f64, lambda: f64) -> Result<FactorMatrix> {
    x.check_finite("prox_elb")?;
    Ok(x.map(|v| prox_elb_scalar(v, kappa, lambda)))
}

/// Element-wise prox with a per-entry step size: entry `ij` uses
/// `(steps_ij·kappa, steps_ij·lambda)`.
pub fn prox_elb_stepped(
    x: &FactorMatrix,
    steps: &FactorMatrix,
    kappa: f64,
    lambda: f64,
) -> Result<FactorMatrix> {
    x.check_finite("prox_elb")?;
    x.zip_map(steps, |v, eta| prox_elb_scalar(v, eta * kappa, eta * lambda))
}

/// Weighted average `(X + γ·anchor) / (1 + γ)`.
pub fn prox_proximity(x: &FactorMatrix, gamma: f64, anchor: &FactorMatrix) -> Result<FactorMatrix> {
    if x.shape() != anchor.shape() {
        return Err(Error::DimensionMismatch {
            op: "prox_proximity",
            left: x.shape(),
            right: anchor.shape(),
        });
    }
    let denom = 1.0 + gamma;
    x.zip_map(anchor, |v, a| (v + gamma * a) / denom)
}

/// Per-entry variant of [`prox_proximity`] for matrix step sizes.
pub fn prox_proximity_stepped(
    x: &FactorMatrix,
    steps: &FactorMatrix,
    gamma: f64,
    anchor: &FactorMatrix,
) -> Result<FactorMatrix> {
    if x.shape() != anchor.shape() || x.shape() != steps.shape() {
        return Err(Error::DimensionMismatch {
            op: "prox_proximity",
            left: x.shape(),
            right: anchor.shape(),
        });
    }
    let data = x
        .as_slice()
        .iter()
        .zip(steps.as_slice())
        .zip(anchor.as_slice())
        .map(|((&v, &eta), &a)| {
            let g = eta * gamma;
            (v + g * a) / (1.0 + g)
        })
        .collect();
    FactorMatrix::from_vec(x.rows(), x.cols(), data)
}
