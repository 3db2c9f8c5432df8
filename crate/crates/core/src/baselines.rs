//! Post-hoc federation of local Boolean factorizers: run any solver per
//! client, combine the coefficient matrices with a Boolean aggregation, and
//! broadcast the result.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::StepRule;
use crate::error::{Error, Result};
use crate::federation::{run_federated, round_factors, FederationConfig};
use crate::matrix::{BinaryMatrix, FactorMatrix};
use crate::privacy::PrivacyConfig;
use crate::proximal::{ProximityParams, RegularizationParams};

/// A centralized Boolean factorization algorithm usable at each client.
pub trait LocalFactorizer: Sync {
    fn name(&self) -> &str;

    /// Returns `(U, V)` with shapes `rows × k` and `k × cols`.
    fn factorize(&self, a: &BinaryMatrix, k: usize, seed: u64) -> Result<(BinaryMatrix, BinaryMatrix)>;
}

/// Adapts a closure to [`LocalFactorizer`].
pub struct FnFactorizer<F> {
    name: String,
    f: F,
}

impl<F> FnFactorizer<F>
where
    F: Fn(&BinaryMatrix, usize, u64) -> Result<(BinaryMatrix, BinaryMatrix)> + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self {
            name: name.into(),
            f,
        }
    }
}

impl<F> LocalFactorizer for FnFactorizer<F>
where
    F: Fn(&BinaryMatrix, usize, u64) -> Result<(BinaryMatrix, BinaryMatrix)> + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn factorize(&self, a: &BinaryMatrix, k: usize, seed: u64) -> Result<(BinaryMatrix, BinaryMatrix)> {
        (self.f)(a, k, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    RoundedAverage,
    MajorityVote,
    LogicalOr,
}

impl Aggregation {
    pub fn apply(&self, vs: &[BinaryMatrix]) -> Result<BinaryMatrix> {
        match self {
            Aggregation::RoundedAverage => agg_rounded_average(vs),
            Aggregation::MajorityVote => agg_majority_vote(vs),
            Aggregation::LogicalOr => agg_logical_or(vs),
        }
    }
}

fn vote_counts(vs: &[BinaryMatrix]) -> Result<((usize, usize), Vec<usize>)> {
    let first = vs
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty list"))?;
    let shape = first.shape();
    let mut counts = vec![0usize; shape.0 * shape.1];
    for v in vs {
        if v.shape() != shape {
            return Err(Error::DimensionMismatch {
                op: "aggregate",
                left: shape,
                right: v.shape(),
            });
        }
        for &(r, c) in v.entries() {
            counts[r * shape.1 + c] += 1;
        }
    }
    Ok((shape, counts))
}

fn from_predicate(shape: (usize, usize), counts: &[usize], keep: impl Fn(usize) -> bool) -> BinaryMatrix {
    let dense: Vec<u8> = counts.iter().map(|&n| u8::from(keep(n))).collect();
    BinaryMatrix::from_dense(shape.0, shape.1, &dense).expect("shape preserved")
}

/// Nearest-integer rounding of the mean; a mean of exactly ½ rounds up.
pub fn agg_rounded_average(vs: &[BinaryMatrix]) -> Result<BinaryMatrix> {
    let (shape, counts) = vote_counts(vs)?;
    let c = vs.len();
    // round(n / c) == 1  <=>  n / c >= 1/2  <=>  2n >= c
    Ok(from_predicate(shape, &counts, |n| 2 * n >= c))
}

/// One where at least `C/2` clients vote one.
pub fn agg_majority_vote(vs: &[BinaryMatrix]) -> Result<BinaryMatrix> {
    let (shape, counts) = vote_counts(vs)?;
    let c = vs.len() as f64;
    Ok(from_predicate(shape, &counts, |n| n as f64 >= c / 2.0))
}

pub fn agg_logical_or(vs: &[BinaryMatrix]) -> Result<BinaryMatrix> {
    let (shape, counts) = vote_counts(vs)?;
    Ok(from_predicate(shape, &counts, |n| n > 0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedRun {
    pub u: Vec<BinaryMatrix>,
    pub v_hat: BinaryMatrix,
}

/// Factorizes every block locally, aggregates the `V_i`, and hands `V̂`
/// back to every client.
pub fn run_aggregated_bmf(
    parts: &[BinaryMatrix],
    algo: &dyn LocalFactorizer,
    agg: Aggregation,
    k: usize,
    seed: u64,
) -> Result<AggregatedRun> {
    let cols = parts
        .first()
        .ok_or_else(|| Error::invalid("no client data"))?
        .cols();
    if let Some(p) = parts.iter().find(|p| p.cols() != cols) {
        return Err(Error::DimensionMismatch {
            op: "run_aggregated_bmf",
            left: (parts[0].rows(), cols),
            right: p.shape(),
        });
    }
    let local: Vec<(BinaryMatrix, BinaryMatrix)> = parts
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let wrap = |e| Error::Client {
                client: i,
                source: Box::new(e),
            };
            let (u, v) = algo
                .factorize(a, k, seed)
                .map_err(wrap)?;
            if u.shape() != (a.rows(), k) || v.shape() != (k, cols) {
                return Err(wrap(Error::invalid(format!(
                    "{} returned factors {:?} x {:?} for data {:?} at rank {k}",
                    algo.name(),
                    u.shape(),
                    v.shape(),
                    a.shape()
                ))));
            }
            Ok((u, v))
        })
        .collect::<Result<_>>()?;
    let (u, vs): (Vec<_>, Vec<_>) = local.into_iter().unzip();
    let v_hat = agg.apply(&vs)?;
    Ok(AggregatedRun { u, v_hat })
}

/// Outcome of the rounding-threshold grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdFit {
    pub alpha: f64,
    pub beta: f64,
    pub loss: usize,
    pub u: Vec<BinaryMatrix>,
    pub v: BinaryMatrix,
}

/// `n` equidistant points from `1e-12` to `1`.
pub fn threshold_grid(n: usize) -> Vec<f64> {
    const LO: f64 = 1e-12;
    match n {
        0 => Vec::new(),
        1 => vec![LO],
        _ => (0..n)
            .map(|i| LO + (1.0 - LO) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub const THRESHOLD_GRID_POINTS: usize = 100;

/// Bitmask over the rank dimension, one word per 64 components.
type Mask = Vec<u64>;

fn row_masks(x: &FactorMatrix, threshold: f64) -> Vec<Mask> {
    let words = x.cols().div_ceil(64).max(1);
    (0..x.rows())
        .map(|r| {
            let mut m = vec![0u64; words];
            for (l, &v) in x.row(r).iter().enumerate() {
                if v >= threshold {
                    m[l / 64] |= 1 << (l % 64);
                }
            }
            m
        })
        .collect()
}

fn group(masks: Vec<Mask>) -> (Vec<usize>, Vec<Mask>) {
    let mut ids: HashMap<Mask, usize> = HashMap::new();
    let mut reps = Vec::new();
    let assignment = masks
        .into_iter()
        .map(|m| {
            let next = reps.len();
            *ids.entry(m.clone()).or_insert_with(|| {
                reps.push(m);
                next
            })
        })
        .collect();
    (assignment, reps)
}

fn intersects(a: &Mask, b: &Mask) -> bool {
    a.iter().zip(b).any(|(x, y)| x & y != 0)
}

/// Mismatch count of `[U ≥ α] ∘ [V ≥ β]` against the data, summed over
/// clients. Rows and columns are grouped by their threshold patterns so the
/// cost is dominated by one pass over the ones of the data.
fn threshold_loss(
    u_masks: &[(Vec<usize>, Vec<Mask>)],
    v_cols: &(Vec<usize>, Vec<Mask>),
    parts: &[BinaryMatrix],
) -> usize {
    let (col_group, col_reps) = v_cols;
    let mut col_counts = vec![0usize; col_reps.len()];
    for &g in col_group {
        col_counts[g] += 1;
    }
    let mut loss = 0;
    for ((row_group, row_reps), a) in u_masks.iter().zip(parts) {
        let (gr, gc) = (row_reps.len(), col_reps.len());
        let mut row_counts = vec![0usize; gr];
        for &g in row_group {
            row_counts[g] += 1;
        }
        let mut ones = vec![0usize; gr * gc];
        for &(r, c) in a.entries() {
            ones[row_group[r] * gc + col_group[c]] += 1;
        }
        for i in 0..gr {
            for j in 0..gc {
                let block_ones = ones[i * gc + j];
                loss += if intersects(&row_reps[i], &col_reps[j]) {
                    row_counts[i] * col_counts[j] - block_ones
                } else {
                    block_ones
                };
            }
        }
    }
    loss
}

/// Exhaustive search over the 100 × 100 threshold grid for the single
/// `(α, β)` pair minimizing the total Hamming loss; ties go to the
/// lexicographically smallest pair.
pub fn threshold_round_search(
    us: &[FactorMatrix],
    v: &FactorMatrix,
    parts: &[BinaryMatrix],
) -> Result<ThresholdFit> {
    threshold_round_search_on(us, v, parts, &threshold_grid(THRESHOLD_GRID_POINTS))
}

pub fn threshold_round_search_on(
    us: &[FactorMatrix],
    v: &FactorMatrix,
    parts: &[BinaryMatrix],
    grid: &[f64],
) -> Result<ThresholdFit> {
    if us.len() != parts.len() {
        return Err(Error::invalid(format!("{} factors for {} data blocks", us.len(), parts.len())));
    }
    if grid.is_empty() {
        return Err(Error::invalid("empty threshold grid"));
    }
    for (u, a) in us.iter().zip(parts) {
        if u.rows() != a.rows() || u.cols() != v.rows() || v.cols() != a.cols() {
            return Err(Error::invalid(format!(
                "factor shapes {:?} x {:?} do not fit data {:?}",
                u.shape(),
                v.shape(),
                a.shape()
            )));
        }
    }
    let vt = v.transpose();
    let col_patterns: Vec<_> = grid.iter().map(|&b| group(row_masks(&vt, b))).collect();
    let best = grid
        .par_iter()
        .enumerate()
        .map(|(ai, &alpha)| {
            let u_masks: Vec<_> = us.iter().map(|u| group(row_masks(u, alpha))).collect();
            col_patterns
                .iter()
                .enumerate()
                .map(|(bi, cols)| (threshold_loss(&u_masks, cols, parts), ai, bi))
                .min()
                .expect("grid is nonempty")
        })
        .min()
        .expect("grid is nonempty");
    let (loss, ai, bi) = best;
    let (alpha, beta) = (grid[ai], grid[bi]);
    let threshold = |x: &FactorMatrix, t: f64| {
        let dense: Vec<u8> = x.as_slice().iter().map(|&e| u8::from(e >= t)).collect();
        BinaryMatrix::from_dense(x.rows(), x.cols(), &dense).expect("shape preserved")
    };
    Ok(ThresholdFit {
        alpha,
        beta,
        loss,
        u: us.iter().map(|u| threshold(u, alpha)).collect(),
        v: threshold(v, beta),
    })
}

/// Settings of the shipped centralized factorizer: a single-client run of
/// the federated solver with no proximity pull, rounded at the end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceFactorizer {
    pub reg: RegularizationParams,
    pub rule: StepRule,
    pub iterations: usize,
}

impl Default for ReferenceFactorizer {
    fn default() -> Self {
        Self {
            reg: RegularizationParams {
                kappa: 0.01,
                lambda: 0.05,
                growth: 1.02,
            },
            rule: StepRule::multiplicative(0.001),
            iterations: 500,
        }
    }
}

impl LocalFactorizer for ReferenceFactorizer {
    fn name(&self) -> &str {
        "reference"
    }

    fn factorize(&self, a: &BinaryMatrix, k: usize, seed: u64) -> Result<(BinaryMatrix, BinaryMatrix)> {
        if k == 0 || k > a.rows().min(a.cols()) {
            return Err(Error::invalid(format!(
                "rank {k} is not within 1..={} for a {}x{} matrix",
                a.rows().min(a.cols()),
                a.rows(),
                a.cols()
            )));
        }
        let cfg = FederationConfig {
            clients: 1,
            rank: k,
            sync_interval: self.iterations.max(1) + 1,
            max_iterations: self.iterations,
            reg: self.reg,
            prox: ProximityParams { gamma: 0.0 },
            rule: self.rule,
            privacy: PrivacyConfig::none(),
            global_seed: seed,
            weighted_mean: false,
            shared_init: true,
            time_budget: None,
        };
        let run = run_federated(std::slice::from_ref(a), &cfg)?;
        let (u, v) = round_factors(&run.u[0], &run.v[0]);
        Ok(prune_unused(&u, &v))
    }
}

/// Clears the components that one side leaves empty: a column of `U` with no
/// ones makes the matching row of `V` dead weight and vice versa. The Boolean
/// product is unchanged.
pub fn prune_unused(u: &BinaryMatrix, v: &BinaryMatrix) -> (BinaryMatrix, BinaryMatrix) {
    let k = u.cols();
    let mut u_used = vec![false; k];
    let mut v_used = vec![false; k];
    u.entries().iter().for_each(|&(_, l)| u_used[l] = true);
    v.entries().iter().for_each(|&(l, _)| v_used[l] = true);
    let live: Vec<bool> = u_used.iter().zip(&v_used).map(|(a, b)| *a && *b).collect();
    let keep = |m: &BinaryMatrix, col: bool| {
        let entries = m
            .entries()
            .iter()
            .copied()
            .filter(|&(r, c)| live[if col { c } else { r }])
            .collect();
        BinaryMatrix::from_coords(m.rows(), m.cols(), entries).expect("subset of valid coordinates")
    };
    (keep(u, true), keep(v, false))
}

/// [`ReferenceFactorizer`] with default settings.
pub fn reference_local_factorizer(a: &BinaryMatrix, k: usize, seed: u64) -> Result<(BinaryMatrix, BinaryMatrix)> {
    ReferenceFactorizer::default().factorize(a, k, seed)
}
