//! A single federated client running inertial proximal alternating
//! updates on its private block `A_i ≈ U_i V_i`.
//!
//! Loss convention: `f = ‖A − UV‖²_F` (no ½), so `∇_U f = 2(UV − A)Vᵀ` and
//! the gradient Lipschitz constant in `U` is `2‖V‖₂²`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{frobenius_sq, real_product, spectral_norm, BinaryMatrix, FactorMatrix};
use crate::matrix::{SPECTRAL_MAX_ITER, SPECTRAL_TOL};
use crate::proximal::{
    elb_value, prox_elb, prox_elb_stepped, prox_proximity, prox_proximity_stepped,
    ProximityParams, RegularizationParams,
};
use crate::rng;

/// Guard added to `2‖V‖₂²` before inverting.
pub const LIPSCHITZ_EPS: f64 = 1e-12;
/// Largest step a degenerate (all-zero) factor can produce.
pub const MAX_STEP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepVariant {
    Lipschitz,
    MultiplicativeUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub variant: StepVariant,
    pub inertia_beta: f64,
    pub mu_epsilon: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            variant: StepVariant::Lipschitz,
            inertia_beta: 0.001,
            mu_epsilon: 1e-12,
        }
    }
}

impl StepRule {
    pub fn lipschitz(inertia_beta: f64) -> Self {
        Self {
            variant: StepVariant::Lipschitz,
            inertia_beta,
            ..Self::default()
        }
    }

    pub fn multiplicative(inertia_beta: f64) -> Self {
        Self {
            variant: StepVariant::MultiplicativeUpdate,
            inertia_beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inertia_beta >= 0.0 && self.inertia_beta < 1.0) {
            return Err(Error::invalid(format!(
                "inertia beta must lie in [0, 1), got {}",
                self.inertia_beta
            )));
        }
        if !(self.mu_epsilon > 0.0 && self.mu_epsilon <= 1e-8) {
            return Err(Error::invalid(format!(
                "mu epsilon must lie in (0, 1e-8], got {}",
                self.mu_epsilon
            )));
        }
        Ok(())
    }
}

/// One client's data block, current and previous factor iterates, and
/// local iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub data: BinaryMatrix,
    pub u: FactorMatrix,
    pub v: FactorMatrix,
    pub u_prev: FactorMatrix,
    pub v_prev: FactorMatrix,
    pub iteration: usize,
    pub rng_seed: u64,
}

impl ClientState {
    /// Wraps explicit factors; previous iterates start equal to the current
    /// ones.
    pub fn new(data: BinaryMatrix, u: FactorMatrix, v: FactorMatrix, rng_seed: u64) -> Result<Self> {
        if u.rows() != data.rows() || v.cols() != data.cols() || u.cols() != v.rows() {
            return Err(Error::invalid(format!(
                "factor shapes {:?} x {:?} do not fit data {:?}",
                u.shape(),
                v.shape(),
                data.shape()
            )));
        }
        Ok(Self {
            data,
            u_prev: u.clone(),
            v_prev: v.clone(),
            u,
            v,
            iteration: 0,
            rng_seed,
        })
    }

    /// Draws `U` and `V` i.i.d. uniform on `[0, 1]` from the client's stream.
    pub fn initialize(data: BinaryMatrix, rank: usize, rng_seed: u64) -> Self {
        let mut rng = rng::stream(rng_seed, &[rng::tag::INIT]);
        let u = FactorMatrix::from_fn(data.rows(), rank, |_, _| rng.random::<f64>());
        let v = FactorMatrix::from_fn(rank, data.cols(), |_, _| rng.random::<f64>());
        Self::new(data, u, v, rng_seed).expect("shapes are consistent by construction")
    }

    /// Draws `U` from the client's own stream and starts from the given `V`.
    pub fn initialize_with_v(data: BinaryMatrix, v: FactorMatrix, rng_seed: u64) -> Self {
        let u = Self::draw_uniform(data.rows(), v.rows(), rng_seed);
        Self::new(data, u, v, rng_seed).expect("shapes are consistent by construction")
    }

    /// Uniform `[0, 1)` entries from `stream(seed, [INIT])`.
    pub fn draw_uniform(rows: usize, cols: usize, seed: u64) -> FactorMatrix {
        let mut rng = rng::stream(seed, &[rng::tag::INIT]);
        FactorMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }
}

fn residual(a: &BinaryMatrix, u: &FactorMatrix, v: &FactorMatrix) -> Result<FactorMatrix> {
    if u.rows() != a.rows() || v.cols() != a.cols() || u.cols() != v.rows() {
        return Err(Error::invalid(format!(
            "factor shapes {:?} x {:?} do not fit data {:?}",
            u.shape(),
            v.shape(),
            a.shape()
        )));
    }
    real_product(u, v)?.sub_binary(a)
}

/// `2(UV − A)Vᵀ`.
pub fn grad_u(a: &BinaryMatrix, u: &FactorMatrix, v: &FactorMatrix) -> Result<FactorMatrix> {
    Ok(residual(a, u, v)?.matmul_t(v)?.scale(2.0))
}

/// `2Uᵀ(UV − A)`.
pub fn grad_v(a: &BinaryMatrix, u: &FactorMatrix, v: &FactorMatrix) -> Result<FactorMatrix> {
    Ok(u.t_matmul(&residual(a, u, v)?)?.scale(2.0))
}

fn inverse_lipschitz(factor: &FactorMatrix) -> Result<f64> {
    if factor.is_empty() {
        return Err(Error::invalid("Lipschitz step of an empty factor"));
    }
    let sigma = spectral_norm(factor, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?;
    Ok((1.0 / (2.0 * sigma * sigma + LIPSCHITZ_EPS)).min(MAX_STEP))
}

/// Step size `1/L` for the `U` block, `L = 2‖V‖₂²`.
pub fn lipschitz_eta_u(v: &FactorMatrix) -> Result<f64> {
    inverse_lipschitz(v)
}

/// Step size `1/L` for the `V` block, `L = 2‖U‖₂²`.
pub fn lipschitz_eta_v(u: &FactorMatrix) -> Result<f64> {
    inverse_lipschitz(u)
}

fn ensure_nonnegative(x: &FactorMatrix, what: &str) -> Result<()> {
    if let Some(bad) = x.as_slice().iter().find(|&&e| e < 0.0) {
        return Err(Error::invalid(format!(
            "multiplicative step needs nonnegative {what}, found {bad}"
        )));
    }
    Ok(())
}

/// Per-entry step `U ⊘ (UVVᵀ + ε)`.
pub fn mu_eta_u(u: &FactorMatrix, v: &FactorMatrix, eps: f64) -> Result<FactorMatrix> {
    ensure_nonnegative(u, "U")?;
    let denom = real_product(u, v)?.matmul_t(v)?;
    u.zip_map(&denom, |x, d| x / (d + eps))
}

/// Per-entry step `V ⊘ (UᵀUV + ε)`.
pub fn mu_eta_v(u: &FactorMatrix, v: &FactorMatrix, eps: f64) -> Result<FactorMatrix> {
    ensure_nonnegative(v, "V")?;
    let denom = u.t_matmul(&real_product(u, v)?)?;
    v.zip_map(&denom, |x, d| x / (d + eps))
}

/// `‖A − UV‖² + R(U) + R(V) + γ‖V − anchor‖²`, with `reg.lambda` taken as
/// the current `λ_t`. Without an anchor the proximity term is zero.
pub fn local_objective(
    state: &ClientState,
    reg: &RegularizationParams,
    prox: &ProximityParams,
    anchor: Option<&FactorMatrix>,
) -> Result<f64> {
    let loss = frobenius_sq(&residual(&state.data, &state.u, &state.v)?);
    let penalty = match anchor {
        Some(a) => prox.gamma * frobenius_sq(&state.v.sub(a)?),
        None => 0.0,
    };
    Ok(loss + elb_value(&state.u, reg)? + elb_value(&state.v, reg)? + penalty)
}

fn extrapolate(cur: &FactorMatrix, prev: &FactorMatrix, beta: f64) -> Result<FactorMatrix> {
    if beta == 0.0 {
        return Ok(cur.clone());
    }
    cur.zip_map(prev, |c, p| c + beta * (c - p))
}

fn staged(x: FactorMatrix, stage: &str) -> Result<FactorMatrix> {
    x.check_finite(stage)?;
    Ok(x)
}

/// Quadratic weights in the objective (`λx²`, `γ‖V − V̂‖²`) are twice the
/// weights the proximal maps are written for.
const QUAD_SCALE: f64 = 2.0;

#[derive(Clone, Copy)]
enum Block {
    U,
    V,
}

enum Step {
    Scalar(f64),
    PerEntry(FactorMatrix),
}

/// Extrapolate, gradient step and Boolean prox for one block, holding the
/// other block fixed.
fn block_step(
    block: Block,
    a: &BinaryMatrix,
    u: &FactorMatrix,
    v: &FactorMatrix,
    prev: &FactorMatrix,
    reg: &RegularizationParams,
    rule: &StepRule,
) -> Result<(FactorMatrix, Step)> {
    let (name, cur) = match block {
        Block::U => ("u", u),
        Block::V => ("v", v),
    };
    let mut point = staged(
        extrapolate(cur, prev, rule.inertia_beta)?,
        &format!("{name}_extrapolate"),
    )?;
    if rule.variant == StepVariant::MultiplicativeUpdate {
        // multiplicative steps live on the nonnegative orthant
        point = point.map(|x| x.max(0.0));
    }
    let grad = match block {
        Block::U => grad_u(a, &point, v)?,
        Block::V => grad_v(a, u, &point)?,
    };
    let grad = staged(grad, &format!("{name}_gradient"))?;

    let (moved, step) = match rule.variant {
        StepVariant::Lipschitz => {
            let eta = match block {
                Block::U => lipschitz_eta_u(v)?,
                Block::V => lipschitz_eta_v(u)?,
            };
            (point.zip_map(&grad, |x, g| x - eta * g)?, Step::Scalar(eta))
        }
        StepVariant::MultiplicativeUpdate => {
            let eta = match block {
                Block::U => mu_eta_u(&point, v, rule.mu_epsilon)?,
                Block::V => mu_eta_v(u, &point, rule.mu_epsilon)?,
            };
            (mu_descend(&point, &eta, &grad)?, Step::PerEntry(eta))
        }
    };
    let moved = staged(moved, &format!("{name}_gradient_step"))?;
    let next = match &step {
        Step::Scalar(eta) => prox_elb(&moved, eta * reg.kappa, QUAD_SCALE * eta * reg.lambda)?,
        Step::PerEntry(eta) => prox_elb_stepped(&moved, eta, reg.kappa, QUAD_SCALE * reg.lambda)?,
    };
    Ok((staged(next, &format!("{name}_prox"))?, step))
}

/// `X − η ⊙ (∇/2)`: with `η` from [`mu_eta_u`]/[`mu_eta_v`] this is the
/// classical multiplicative update.
pub fn mu_descend(x: &FactorMatrix, eta: &FactorMatrix, grad: &FactorMatrix) -> Result<FactorMatrix> {
    let halved = grad.scale(0.5);
    let step = eta.zip_map(&halved, |e, g| e * g)?;
    x.sub(&step)
}

/// One local iteration: update `U`, then `V` against the fresh `U`, then
/// pull `V` toward the anchor. `reg.lambda` must already be `λ_t`.
pub fn local_round(
    state: &ClientState,
    reg: &RegularizationParams,
    prox: &ProximityParams,
    rule: &StepRule,
    anchor: Option<&FactorMatrix>,
) -> Result<ClientState> {
    let mut next = state.clone();
    local_round_in_place(&mut next, reg, prox, rule, anchor)?;
    Ok(next)
}

/// [`local_round`] updating the state in place. On error the state is left
/// untouched.
pub fn local_round_in_place(
    state: &mut ClientState,
    reg: &RegularizationParams,
    prox: &ProximityParams,
    rule: &StepRule,
    anchor: Option<&FactorMatrix>,
) -> Result<()> {
    if let Some(a) = anchor {
        if a.shape() != state.v.shape() {
            return Err(Error::DimensionMismatch {
                op: "local_round anchor",
                left: state.v.shape(),
                right: a.shape(),
            });
        }
    }
    let a = &state.data;
    let (u_next, _) = block_step(Block::U, a, &state.u, &state.v, &state.u_prev, reg, rule)?;
    let (mut v_next, step) = block_step(Block::V, a, &u_next, &state.v, &state.v_prev, reg, rule)?;
    if let (Some(anchor), true) = (anchor, prox.gamma > 0.0) {
        v_next = match step {
            Step::Scalar(eta) => prox_proximity(&v_next, QUAD_SCALE * eta * prox.gamma, anchor)?,
            Step::PerEntry(eta) => {
                prox_proximity_stepped(&v_next, &eta, QUAD_SCALE * prox.gamma, anchor)?
            }
        };
        v_next = staged(v_next, "v_proximity")?;
    }
    state.u_prev = std::mem::replace(&mut state.u, u_next);
    state.v_prev = std::mem::replace(&mut state.v, v_next);
    state.iteration += 1;
    Ok(())
}
