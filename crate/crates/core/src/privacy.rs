//! Clipping and noise mechanisms applied to a client's payload before it
//! leaves the client.
//!
//! Neighbouring datasets differ in one row of one client's block. Frobenius
//! clipping at `θ` bounds any payload change by `2θ`, which is used as the
//! sensitivity when clipping is on.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{frobenius_sq, FactorMatrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    None,
    Gaussian,
    Laplace,
    BernoulliXor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    /// Only meaningful (and required) for the Gaussian mechanism.
    pub delta: Option<f64>,
    pub clip_theta: f64,
    pub sensitivity: f64,
    pub clipped: bool,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            mechanism: Mechanism::None,
            epsilon: 1.0,
            delta: None,
            clip_theta: 2.0,
            sensitivity: 1.0,
            clipped: false,
        }
    }
}

impl PrivacyConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn gaussian(epsilon: f64, delta: f64) -> Self {
        Self {
            mechanism: Mechanism::Gaussian,
            epsilon,
            delta: Some(delta),
            ..Self::default()
        }
    }

    pub fn laplace(epsilon: f64) -> Self {
        Self {
            mechanism: Mechanism::Laplace,
            epsilon,
            ..Self::default()
        }
    }

    pub fn bernoulli(epsilon: f64) -> Self {
        Self {
            mechanism: Mechanism::BernoulliXor,
            epsilon,
            ..Self::default()
        }
    }

    pub fn with_clipping(mut self, theta: f64) -> Self {
        self.clipped = true;
        self.clip_theta = theta;
        self
    }

    /// Every violated constraint, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.mechanism == Mechanism::None {
            return out;
        }
        let needs_positive_eps = self.mechanism != Mechanism::BernoulliXor;
        if !(self.epsilon.is_finite() && (self.epsilon > 0.0 || !needs_positive_eps && self.epsilon >= 0.0)) {
            out.push(format!("privacy epsilon must be positive, got {}", self.epsilon));
        }
        match (self.mechanism, self.delta) {
            (Mechanism::Gaussian, None) => out.push("gaussian mechanism requires delta".into()),
            (Mechanism::Gaussian, Some(d)) if !(d > 0.0 && d < 1.0) => {
                out.push(format!("privacy delta must lie in (0, 1), got {d}"))
            }
            (Mechanism::Laplace | Mechanism::BernoulliXor, Some(_)) => {
                out.push("delta is only used by the gaussian mechanism".into())
            }
            _ => {}
        }
        if !(self.clip_theta > 1.0 && self.clip_theta.is_finite()) {
            out.push(format!("clip theta must exceed 1, got {}", self.clip_theta));
        }
        if !(self.sensitivity > 0.0 && self.sensitivity.is_finite()) {
            out.push(format!("sensitivity must be positive, got {}", self.sensitivity));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            Some(msg) => Err(Error::invalid(msg.clone())),
            None => Ok(()),
        }
    }

    /// `2θ` when clipping, the configured sensitivity otherwise.
    pub fn effective_sensitivity(&self) -> f64 {
        if self.clipped {
            2.0 * self.clip_theta
        } else {
            self.sensitivity
        }
    }

    /// Resolves the mechanism's scale and binds it to `seed`.
    pub fn draw(&self, seed: u64) -> Result<NoiseDraw> {
        self.validate()?;
        let sens = self.effective_sensitivity();
        let scale = match self.mechanism {
            Mechanism::None => 0.0,
            Mechanism::Gaussian => gaussian_sigma(sens, self.epsilon, self.delta.unwrap_or(f64::NAN))?,
            Mechanism::Laplace => laplace_scale(sens, self.epsilon)?,
            Mechanism::BernoulliXor => bernoulli_flip_prob(self.epsilon),
        };
        Ok(NoiseDraw { seed, scale })
    }
}

/// A seeded noise realization: `scale` is σ (Gaussian), b (Laplace) or
/// the flip probability (Bernoulli).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraw {
    pub seed: u64,
    pub scale: f64,
}

/// `σ = Δ/ε · sqrt(2 ln(5 / (4δ)))`.
pub fn gaussian_sigma(delta_sens: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if delta_sens.is_nan() || delta_sens <= 0.0 || epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid(format!(
            "sensitivity and epsilon must be positive, got {delta_sens} and {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.25) {
        return Err(Error::invalid(format!("delta must lie in (0, 5/4], got {delta}")));
    }
    Ok(delta_sens / epsilon * (2.0 * (5.0 / (4.0 * delta)).ln()).sqrt())
}

/// Laplace scale `b = Δ/ε`.
pub fn laplace_scale(delta_sens: f64, epsilon: f64) -> Result<f64> {
    if delta_sens.is_nan() || delta_sens <= 0.0 || epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid(format!(
            "sensitivity and epsilon must be positive, got {delta_sens} and {epsilon}"
        )));
    }
    Ok(delta_sens / epsilon)
}

/// Randomized-response flip probability `1 / (1 + e^ε)`.
pub fn bernoulli_flip_prob(epsilon: f64) -> f64 {
    1.0 / (1.0 + epsilon.exp())
}

/// Rescales `v` onto the Frobenius ball of radius `theta` if it lies outside.
pub fn clip(v: &FactorMatrix, theta: f64) -> FactorMatrix {
    let norm = frobenius_sq(v).sqrt();
    if norm > theta {
        v.scale(theta / norm)
    } else {
        v.clone()
    }
}

fn is_boolean(v: &FactorMatrix) -> bool {
    v.as_slice().iter().all(|&x| x == 0.0 || x == 1.0)
}

/// Clips (when configured) and perturbs `v`. Gaussian and Laplace noise is
/// additive; Bernoulli noise XORs each bit and needs a 0/1 input.
pub fn apply_noise(v: &FactorMatrix, cfg: &PrivacyConfig, draw: &NoiseDraw) -> Result<FactorMatrix> {
    let base = if cfg.clipped && cfg.mechanism != Mechanism::None {
        clip(v, cfg.clip_theta)
    } else {
        v.clone()
    };
    let mut rng = rng::stream(draw.seed, &[rng::tag::NOISE]);
    let out = match cfg.mechanism {
        Mechanism::None => base,
        Mechanism::Gaussian => {
            let normal = Normal::new(0.0, draw.scale)
                .map_err(|e| Error::invalid(format!("gaussian scale: {e}")))?;
            base.map(|x| x + normal.sample(&mut rng))
        }
        Mechanism::Laplace => {
            let b = draw.scale;
            base.map(|x| x + sample_laplace(&mut rng, b))
        }
        Mechanism::BernoulliXor => {
            if !is_boolean(&base) {
                return Err(Error::invalid("bernoulli xor noise needs a 0/1 payload"));
            }
            let p = draw.scale;
            base.map(|x| if rng.random::<f64>() < p { 1.0 - x } else { x })
        }
    };
    Ok(out)
}

/// Inverse-CDF Laplace sample with location 0 and scale `b`.
fn sample_laplace<R: Rng>(rng: &mut R, b: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_sigma_examples() {
        let s = gaussian_sigma(1.0, 1.0, 0.05).unwrap();
        assert!((s - (2.0 * 25f64.ln()).sqrt()).abs() < 1e-12);
        assert!((s - 2.5373).abs() < 1e-4);
        assert!((gaussian_sigma(2.0, 1.0, 0.05).unwrap() - 2.0 * s).abs() < 1e-12);
        assert!((gaussian_sigma(1.0, 2.0, 0.05).unwrap() - 0.5 * s).abs() < 1e-12);
        assert_eq!(gaussian_sigma(1.0, 1.0, 1.25).unwrap(), 0.0);
        assert!(gaussian_sigma(0.0, 1.0, 0.05).is_err());
        assert!(gaussian_sigma(1.0, -1.0, 0.05).is_err());
    }

    #[test]
    fn laplace_and_bernoulli_examples() {
        assert_eq!(laplace_scale(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(laplace_scale(1.0, 0.5).unwrap(), 2.0);
        assert_eq!(laplace_scale(3.0, 1.5).unwrap(), 2.0);
        assert!(laplace_scale(1.0, 0.0).is_err());
        assert_eq!(bernoulli_flip_prob(0.0), 0.5);
        assert!((bernoulli_flip_prob(3f64.ln()) - 0.25).abs() < 1e-15);
        assert!(bernoulli_flip_prob(800.0) < 1e-300);
    }

    #[test]
    fn clip_examples() {
        let small = FactorMatrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert_eq!(clip(&small, 1.5), small);
        let clipped = clip(&FactorMatrix::filled(2, 2, 1.0), 1.5);
        for &v in clipped.as_slice() {
            assert!((v - 0.75).abs() < 1e-15);
        }
        assert_eq!(clip(&FactorMatrix::zeros(3, 3), 1.5), FactorMatrix::zeros(3, 3));
    }

    #[test]
    fn clip_is_idempotent_and_never_grows() {
        let mut r = rng::stream(5, &[]);
        for _ in 0..100 {
            let v = FactorMatrix::from_fn(3, 4, |_, _| r.random::<f64>() * 3.0 - 1.0);
            let once = clip(&v, 1.7);
            assert!(frobenius_sq(&once) <= frobenius_sq(&v) + 1e-12);
            let twice = clip(&once, 1.7);
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mechanism_none_and_full_flip() {
        let v = FactorMatrix::from_rows(&[[0.3, 1.2]]).unwrap();
        let cfg = PrivacyConfig::none();
        assert_eq!(apply_noise(&v, &cfg, &cfg.draw(1).unwrap()).unwrap(), v);

        let bits = FactorMatrix::from_rows(&[[0.0, 1.0, 1.0, 0.0]]).unwrap();
        let cfg = PrivacyConfig::bernoulli(0.0);
        let flipped = apply_noise(&bits, &cfg, &NoiseDraw { seed: 3, scale: 1.0 }).unwrap();
        assert_eq!(flipped.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        assert!(apply_noise(&v, &cfg, &NoiseDraw { seed: 3, scale: 0.5 }).is_err());
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let v = FactorMatrix::filled(4, 5, 0.5);
        for cfg in [PrivacyConfig::gaussian(1.0, 0.05), PrivacyConfig::laplace(1.0)] {
            let a = apply_noise(&v, &cfg, &cfg.draw(9).unwrap()).unwrap();
            let b = apply_noise(&v, &cfg, &cfg.draw(9).unwrap()).unwrap();
            let c = apply_noise(&v, &cfg, &cfg.draw(10).unwrap()).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn noise_has_zero_mean() {
        let n = 100_000;
        let v = FactorMatrix::zeros(1, n);
        for cfg in [PrivacyConfig::gaussian(1.0, 0.05), PrivacyConfig::laplace(1.0)] {
            let draw = cfg.draw(77).unwrap();
            let noisy = apply_noise(&v, &cfg, &draw).unwrap();
            let mean = noisy.as_slice().iter().sum::<f64>() / n as f64;
            let sd = match cfg.mechanism {
                Mechanism::Gaussian => draw.scale,
                _ => draw.scale * 2f64.sqrt(),
            };
            assert!(mean.abs() < 3.0 * sd / (n as f64).sqrt(), "{mean}");
        }
        // xor noise: flipped fraction is centred on p
        let cfg = PrivacyConfig::bernoulli(1.0);
        let draw = cfg.draw(78).unwrap();
        let noisy = apply_noise(&v, &cfg, &draw).unwrap();
        let frac = noisy.as_slice().iter().sum::<f64>() / n as f64;
        let p = draw.scale;
        assert!((frac - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn config_validation() {
        assert!(PrivacyConfig::none().validate().is_ok());
        assert!(PrivacyConfig::gaussian(1.0, 0.05).validate().is_ok());
        let mut g = PrivacyConfig::gaussian(1.0, 0.05);
        g.delta = None;
        assert!(g.validate().is_err());
        let mut l = PrivacyConfig::laplace(1.0);
        l.delta = Some(0.1);
        assert!(l.validate().is_err());
        let bad = PrivacyConfig::laplace(-1.0).with_clipping(0.5);
        assert_eq!(bad.violations().len(), 2);
        assert_eq!(PrivacyConfig::laplace(1.0).with_clipping(1.5).effective_sensitivity(), 3.0);
    }
}
