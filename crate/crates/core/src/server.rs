//! Server-side proximal aggregation of client coefficient matrices.

use crate::error::{Error, Result};
use crate::matrix::FactorMatrix;
use crate::proximal::{prox_elb, RegularizationParams};

/// Step size of the aggregation prox.
pub const AGGREGATION_STEP: f64 = 1.0;

/// Shared coefficient matrix held by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateState {
    pub v_hat: FactorMatrix,
    pub round: usize,
    pub client_count: usize,
}

impl AggregateState {
    pub fn new(v_hat: FactorMatrix, client_count: usize) -> Self {
        Self {
            v_hat,
            round: 0,
            client_count,
        }
    }

    /// Replaces `v_hat` with the proximal aggregate of `payloads`.
    pub fn aggregate(
        &mut self,
        payloads: &[FactorMatrix],
        weights: Option<&[f64]>,
        reg: &RegularizationParams,
        eta: f64,
    ) -> Result<&FactorMatrix> {
        if payloads.len() != self.client_count {
            return Err(Error::invalid(format!(
                "expected {} payloads, got {}",
                self.client_count,
                payloads.len()
            )));
        }
        let next = proximal_aggregate_weighted(payloads, weights, reg, eta)?;
        if next.shape() != self.v_hat.shape() {
            return Err(Error::DimensionMismatch {
                op: "aggregate",
                left: self.v_hat.shape(),
                right: next.shape(),
            });
        }
        self.v_hat = next;
        self.round += 1;
        Ok(&self.v_hat)
    }
}

/// Sum of `values` independent of their order: sort, then reduce pairwise.
fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    pairwise(values)
}

fn pairwise(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise(lo) + pairwise(hi)
        }
    }
}

/// Entry-wise mean of `payloads`. With `weights` the mean is weighted and
/// normalized by the weight total.
pub fn mean(payloads: &[FactorMatrix], weights: Option<&[f64]>) -> Result<FactorMatrix> {
    let first = payloads
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty payload list"))?;
    for p in payloads {
        if p.shape() != first.shape() {
            return Err(Error::DimensionMismatch {
                op: "aggregate",
                left: first.shape(),
                right: p.shape(),
            });
        }
    }
    let total_weight = match weights {
        Some(w) => {
            if w.len() != payloads.len() {
                return Err(Error::invalid(format!(
                    "{} weights for {} payloads",
                    w.len(),
                    payloads.len()
                )));
            }
            if w.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
                return Err(Error::invalid("weights must be finite and nonnegative"));
            }
            let mut ws = w.to_vec();
            let total = order_free_sum(&mut ws);
            if total <= 0.0 {
                return Err(Error::invalid("weights sum to zero"));
            }
            total
        }
        None => payloads.len() as f64,
    };
    let mut column = vec![0.0; payloads.len()];
    let data = (0..first.len())
        .map(|i| {
            for (slot, (c, p)) in column.iter_mut().zip(payloads.iter().enumerate()) {
                let w = weights.map_or(1.0, |w| w[c]);
                *slot = w * p.as_slice()[i];
            }
            order_free_sum(&mut column) / total_weight
        })
        .collect();
    FactorMatrix::from_vec(first.rows(), first.cols(), data)
}

/// Boolean prox of the unweighted mean with parameters `(η·κ, η·λ_t)`;
/// `reg.lambda` must already be `λ_t`.
pub fn proximal_aggregate(
    payloads: &[FactorMatrix],
    reg: &RegularizationParams,
    eta: f64,
) -> Result<FactorMatrix> {
    proximal_aggregate_weighted(payloads, None, reg, eta)
}

pub fn proximal_aggregate_weighted(
    payloads: &[FactorMatrix],
    weights: Option<&[f64]>,
    reg: &RegularizationParams,
    eta: f64,
) -> Result<FactorMatrix> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("aggregation step must be positive, got {eta}")));
    }
    let avg = mean(payloads, weights)?;
    prox_elb(&avg, eta * reg.kappa, eta * reg.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reg(kappa: f64, lambda: f64) -> RegularizationParams {
        RegularizationParams {
            kappa,
            lambda,
            growth: 1.0,
        }
    }

    #[test]
    fn consensus_on_boolean_is_kept_without_l1() {
        let b = FactorMatrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]]).unwrap();
        for lambda in [0.0, 0.1, 3.0, 1e6] {
            let out = proximal_aggregate(&[b.clone(), b.clone(), b.clone()], &reg(0.0, lambda), 1.0).unwrap();
            assert_eq!(out, b);
        }
        // with κ < ½ a Boolean consensus is still a fixed point
        let out = proximal_aggregate(&[b.clone(), b.clone()], &reg(0.3, 1.0), 1.0).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn zeros_and_ones_average_then_shrink() {
        let payloads = [FactorMatrix::zeros(2, 2), FactorMatrix::filled(2, 2, 1.0)];
        let out = proximal_aggregate(&payloads, &reg(0.1, 1.0), 1.0).unwrap();
        for &v in out.as_slice() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn single_payload_without_regularization_is_identity() {
        let p = FactorMatrix::from_rows(&[[0.3, -0.2], [0.9, 1.4]]).unwrap();
        assert_eq!(proximal_aggregate(std::slice::from_ref(&p), &reg(0.0, 0.0), 1.0).unwrap(), p);
    }

    #[test]
    fn rejects_empty_and_ragged_payloads() {
        assert!(proximal_aggregate(&[], &reg(0.0, 0.0), 1.0).is_err());
        let ragged = [FactorMatrix::zeros(2, 2), FactorMatrix::zeros(2, 3)];
        assert!(matches!(
            proximal_aggregate(&ragged, &reg(0.0, 0.0), 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(proximal_aggregate(&[FactorMatrix::zeros(1, 1)], &reg(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn weighted_mean_respects_weights() {
        let payloads = [FactorMatrix::zeros(1, 1), FactorMatrix::filled(1, 1, 1.0)];
        let m = mean(&payloads, Some(&[1.0, 3.0])).unwrap();
        assert_eq!(m.get(0, 0), 0.75);
        assert!(mean(&payloads, Some(&[1.0])).is_err());
        assert!(mean(&payloads, Some(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn huge_lambda_gives_boolean_output() {
        let payloads = [
            FactorMatrix::from_rows(&[[0.2, 0.7, 0.49]]).unwrap(),
            FactorMatrix::from_rows(&[[0.9, 0.1, 0.52]]).unwrap(),
        ];
        let out = proximal_aggregate(&payloads, &reg(0.001, 1e7), 1.0).unwrap();
        for &v in out.as_slice() {
            assert!(v.abs().min((v - 1.0).abs()) < 1e-5);
        }
    }

    #[test]
    fn state_counts_rounds() {
        let mut s = AggregateState::new(FactorMatrix::zeros(1, 2), 2);
        let payloads = [FactorMatrix::filled(1, 2, 1.0), FactorMatrix::filled(1, 2, 1.0)];
        s.aggregate(&payloads, None, &reg(0.0, 1.0), 1.0).unwrap();
        s.aggregate(&payloads, None, &reg(0.0, 1.0), 1.0).unwrap();
        assert_eq!(s.round, 2);
        assert!(s.aggregate(&payloads[..1], None, &reg(0.0, 1.0), 1.0).is_err());
    }

    proptest! {
        #[test]
        fn aggregation_is_permutation_invariant(
            vals in proptest::collection::vec(-2.0f64..3.0, 7 * 6),
            rot in 0usize..7,
        ) {
            let payloads: Vec<FactorMatrix> = vals
                .chunks(6)
                .map(|c| FactorMatrix::from_vec(2, 3, c.to_vec()).unwrap())
                .collect();
            let mut shuffled = payloads.clone();
            shuffled.rotate_left(rot);
            shuffled.swap(0, 6);
            let r = reg(0.01, 0.3);
            let a = proximal_aggregate(&payloads, &r, 1.0).unwrap();
            let b = proximal_aggregate(&shuffled, &r, 1.0).unwrap();
            prop_assert_eq!(a.as_slice(), b.as_slice());
        }
    }
}
