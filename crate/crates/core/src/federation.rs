//! End-to-end federated factorization over simulated clients.
//!
//! Clients run local rounds in parallel; every `sync_interval` rounds each
//! client ships a (possibly privatized) copy of `V_i`, the server forms the
//! proximal aggregate `V̂`, and every client continues from `V̂`.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{local_objective, local_round_in_place, ClientState, StepRule};
use crate::error::{Error, Result};
use crate::matrix::{boolean_product, BinaryMatrix, FactorMatrix};
use crate::metrics::{integrality_gap, Confusion, RoundLog};
use crate::privacy::{apply_noise, Mechanism, PrivacyConfig};
use crate::proximal::{ProximityParams, RegularizationParams};
use crate::rng::{self, derive_seed, tag};
use crate::server::{proximal_aggregate_weighted, AGGREGATION_STEP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub clients: usize,
    pub rank: usize,
    pub sync_interval: usize,
    pub max_iterations: usize,
    pub reg: RegularizationParams,
    pub prox: ProximityParams,
    pub rule: StepRule,
    pub privacy: PrivacyConfig,
    pub global_seed: u64,
    /// Weight client payloads by their row counts instead of uniformly.
    pub weighted_mean: bool,
    /// Start every client from the same `V`, drawn from the global seed.
    /// When off, each client draws its own `V_i`.
    #[serde(default = "shared_init_default")]
    pub shared_init: bool,
    pub time_budget: Option<Duration>,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            clients: 10,
            rank: 5,
            sync_interval: 10,
            max_iterations: 100,
            reg: RegularizationParams::default(),
            prox: ProximityParams { gamma: DEFAULT_GAMMA },
            rule: StepRule::default(),
            privacy: PrivacyConfig::none(),
            global_seed: 0,
            weighted_mean: false,
            shared_init: true,
            time_budget: None,
        }
    }
}

fn shared_init_default() -> bool {
    true
}

/// Weight of the pull toward `V̂`.
pub const DEFAULT_GAMMA: f64 = 0.1;

impl FederationConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.clients < 1 {
            out.push("clients must be at least 1".to_string());
        }
        if self.rank < 1 {
            out.push("rank must be at least 1".to_string());
        }
        if self.sync_interval < 1 {
            out.push("sync interval must be at least 1".to_string());
        }
        for check in [self.reg.validate(), self.prox.validate(), self.rule.validate()] {
            if let Err(e) = check {
                out.push(e.to_string());
            }
        }
        out.extend(self.privacy.violations());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(v.join("; ")))
        }
    }

    /// Seed of client `index`'s initialization stream.
    pub fn client_seed(&self, index: usize) -> u64 {
        derive_seed(self.global_seed, &[tag::INIT, index as u64])
    }

    /// Seed of the common starting `V`.
    pub fn shared_seed(&self) -> u64 {
        derive_seed(self.global_seed, &[tag::INIT, tag::SHARED])
    }

    /// Freshly initialized state of client `index`.
    pub fn initial_state(&self, index: usize, data: BinaryMatrix, cols: usize) -> ClientState {
        if self.shared_init {
            let v = ClientState::draw_uniform(self.rank, cols, self.shared_seed());
            ClientState::initialize_with_v(data, v, self.client_seed(index))
        } else {
            ClientState::initialize(data, self.rank, self.client_seed(index))
        }
    }

    /// Seed of client `index`'s noise draw at round `round`.
    pub fn noise_seed(&self, index: usize, round: usize) -> u64 {
        derive_seed(self.global_seed, &[tag::NOISE, index as u64, round as u64])
    }
}

/// Row blocks of a shuffled matrix. `row_order[i]` is the original row that
/// became row `i` of the stacked blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub parts: Vec<BinaryMatrix>,
    pub row_order: Vec<usize>,
}

impl Partition {
    /// Applies the same row shuffle and split to another matrix of the same
    /// height, e.g. a ground-truth mask.
    pub fn split_like(&self, other: &BinaryMatrix) -> Result<Vec<BinaryMatrix>> {
        if other.rows() != self.row_order.len() {
            return Err(Error::invalid(format!(
                "matrix has {} rows, partition covers {}",
                other.rows(),
                self.row_order.len()
            )));
        }
        let mut start = 0;
        self.parts
            .iter()
            .map(|p| {
                let block = other.select_rows(&self.row_order[start..start + p.rows()]);
                start += p.rows();
                block
            })
            .collect()
    }
}

/// Shuffles rows with `seed` and cuts them into `clients` contiguous blocks
/// whose sizes differ by at most one (larger blocks first).
pub fn partition(a: &BinaryMatrix, clients: usize, seed: u64) -> Result<Partition> {
    if clients == 0 || clients > a.rows() {
        return Err(Error::invalid(format!(
            "cannot split {} rows among {clients} clients",
            a.rows()
        )));
    }
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..a.rows()).collect();
    order.shuffle(&mut rng::stream(seed, &[tag::PARTITION]));
    let (base, extra) = (a.rows() / clients, a.rows() % clients);
    let mut parts = Vec::with_capacity(clients);
    let mut start = 0;
    for c in 0..clients {
        let len = base + usize::from(c < extra);
        parts.push(a.select_rows(&order[start..start + len])?);
        start += len;
    }
    Ok(Partition {
        parts,
        row_order: order,
    })
}

/// Thresholds factors at ½ (ties go to 1).
pub fn round_factor(x: &FactorMatrix) -> BinaryMatrix {
    let dense: Vec<u8> = x.as_slice().iter().map(|&v| u8::from(v >= 0.5)).collect();
    BinaryMatrix::from_dense(x.rows(), x.cols(), &dense).expect("shape preserved")
}

pub fn round_factors(u: &FactorMatrix, v: &FactorMatrix) -> (BinaryMatrix, BinaryMatrix) {
    (round_factor(u), round_factor(v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub rounds: Vec<RoundLog>,
    pub u: Vec<FactorMatrix>,
    pub v: Vec<FactorMatrix>,
    /// Last aggregate; `None` when no synchronization happened.
    pub v_hat: Option<FactorMatrix>,
    pub u_rounded: Vec<BinaryMatrix>,
    pub v_hat_rounded: Option<BinaryMatrix>,
    pub synchronizations: usize,
    /// Set when the wall-clock budget stopped the run early.
    pub truncated: bool,
}

impl RunHistory {
    /// Boolean reconstruction of each client block from the rounded
    /// factors, using `V̂` when available and the client's own `V_i`
    /// otherwise.
    pub fn reconstructions(&self) -> Result<Vec<BinaryMatrix>> {
        self.u_rounded
            .iter()
            .enumerate()
            .map(|(i, u)| match &self.v_hat_rounded {
                Some(v) => boolean_product(u, v),
                None => boolean_product(u, &round_factor(&self.v[i])),
            })
            .collect()
    }

    /// Equality of everything except wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.rounds.len() == other.rounds.len()
            && self.rounds.iter().zip(&other.rounds).all(|(a, b)| a.same_outcome(b))
            && bit_eq_all(&self.u, &other.u)
            && bit_eq_all(&self.v, &other.v)
            && match (&self.v_hat, &other.v_hat) {
                (Some(a), Some(b)) => bit_eq(a, b),
                (None, None) => true,
                _ => false,
            }
            && self.synchronizations == other.synchronizations
            && self.truncated == other.truncated
    }
}

fn bit_eq(a: &FactorMatrix, b: &FactorMatrix) -> bool {
    a.shape() == b.shape()
        && a.as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

fn bit_eq_all(a: &[FactorMatrix], b: &[FactorMatrix]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| bit_eq(x, y))
}

/// Optional extras for a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    /// Per-client noiseless ground truth; enables `f1_star` in the log.
    pub signal: Option<&'a [BinaryMatrix]>,
    /// Run clients one after the other instead of in parallel.
    pub serial: bool,
}

pub fn run_federated(parts: &[BinaryMatrix], cfg: &FederationConfig) -> Result<RunHistory> {
    run_federated_with(parts, cfg, &RunOptions::default())
}

pub fn run_federated_with(
    parts: &[BinaryMatrix],
    cfg: &FederationConfig,
    opts: &RunOptions<'_>,
) -> Result<RunHistory> {
    cfg.validate()?;
    let cols = parts
        .first()
        .ok_or_else(|| Error::invalid("no client data"))?
        .cols();
    if parts.len() != cfg.clients {
        return Err(Error::invalid(format!(
            "config names {} clients but {} data blocks were given",
            cfg.clients,
            parts.len()
        )));
    }
    if let Some((i, p)) = parts.iter().enumerate().find(|(_, p)| p.cols() != cols) {
        return Err(Error::Client {
            client: i,
            source: Box::new(Error::DimensionMismatch {
                op: "run_federated",
                left: (parts[0].rows(), cols),
                right: p.shape(),
            }),
        });
    }
    if let Some(sig) = opts.signal {
        if sig.len() != parts.len() || sig.iter().zip(parts).any(|(s, p)| s.shape() != p.shape()) {
            return Err(Error::invalid("signal masks do not match the client blocks"));
        }
    }

    let started = Instant::now();
    let mut states: Vec<ClientState> = parts
        .iter()
        .enumerate()
        .map(|(i, p)| cfg.initial_state(i, p.clone(), cols))
        .collect();
    let weights: Option<Vec<f64>> = cfg
        .weighted_mean
        .then(|| parts.iter().map(|p| p.rows() as f64).collect());

    let mut v_hat: Option<FactorMatrix> = None;
    let mut rounds = Vec::with_capacity(cfg.max_iterations);
    let mut synchronizations = 0;
    let mut truncated = false;

    for t in 1..=cfg.max_iterations {
        let reg_t = schedule(&cfg.reg, t)?;
        let anchor = v_hat.as_ref();
        for_each_client(&mut states, opts.serial, |_, s| {
            local_round_in_place(s, &reg_t, &cfg.prox, &cfg.rule, anchor)
        })
        .map_err(|e| wrap_round(t, e))?;

        if t % cfg.sync_interval == 0 {
            let payloads = map_clients(&states, opts.serial, |i, s| {
                make_payload(&s.v, &cfg.privacy, cfg.noise_seed(i, t))
            })
            .map_err(|e| wrap_round(t, e))?;
            let next = proximal_aggregate_weighted(&payloads, weights.as_deref(), &reg_t, AGGREGATION_STEP)
                .map_err(|e| wrap_round(t, e))?;
            for s in &mut states {
                s.v = next.clone();
                // no momentum across a broadcast
                s.v_prev = next.clone();
            }
            v_hat = Some(next);
            synchronizations += 1;
        }

        rounds.push(round_log(t, &states, &reg_t, cfg, v_hat.as_ref(), opts, started)?);

        if let Some(budget) = cfg.time_budget {
            if started.elapsed() >= budget && t < cfg.max_iterations {
                truncated = true;
                break;
            }
        }
    }

    let u_rounded = states.iter().map(|s| round_factor(&s.u)).collect();
    let v_hat_rounded = v_hat.as_ref().map(round_factor);
    Ok(RunHistory {
        rounds,
        u: states.iter().map(|s| s.u.clone()).collect(),
        v: states.into_iter().map(|s| s.v).collect(),
        v_hat,
        u_rounded,
        v_hat_rounded,
        synchronizations,
        truncated,
    })
}

/// Single-machine run on the whole of `a`: the same local iterations, with
/// `V ← prox(V)` every `cfg.sync_interval` rounds in place of the server
/// round trip. Ignores `clients`, `prox`, `privacy` and `weighted_mean`.
pub fn run_centralized(a: &BinaryMatrix, cfg: &FederationConfig) -> Result<RunHistory> {
    let single = FederationConfig {
        clients: 1,
        prox: ProximityParams { gamma: 0.0 },
        privacy: PrivacyConfig::none(),
        ..cfg.clone()
    };
    single.validate()?;
    let started = Instant::now();
    let mut state = single.initial_state(0, a.clone(), a.cols());
    let mut v_hat: Option<FactorMatrix> = None;
    let mut rounds = Vec::with_capacity(single.max_iterations);
    let opts = RunOptions {
        signal: None,
        serial: true,
    };
    for t in 1..=single.max_iterations {
        let reg_t = schedule(&single.reg, t)?;
        local_round_in_place(&mut state, &reg_t, &single.prox, &single.rule, v_hat.as_ref())
            .map_err(|e| wrap_round(t, wrap_client(0, e)))?;
        if t % single.sync_interval == 0 {
            let next = crate::proximal::prox_elb(&state.v, reg_t.kappa, AGGREGATION_STEP * reg_t.lambda)
                .map_err(|e| wrap_round(t, e))?;
            state.v = next.clone();
            state.v_prev = next.clone();
            v_hat = Some(next);
        }
        let log = round_log(t, std::slice::from_ref(&state), &reg_t, &single, v_hat.as_ref(), &opts, started)?;
        rounds.push(log);
    }
    let synchronizations = single.max_iterations / single.sync_interval;
    Ok(RunHistory {
        rounds,
        u_rounded: vec![round_factor(&state.u)],
        v_hat_rounded: v_hat.as_ref().map(round_factor),
        u: vec![state.u],
        v: vec![state.v],
        v_hat,
        synchronizations,
        truncated: false,
    })
}

fn schedule(reg: &RegularizationParams, t: usize) -> Result<RegularizationParams> {
    let reg_t = reg.at(t);
    if reg_t.lambda.is_finite() {
        Ok(reg_t)
    } else {
        Err(wrap_round(t, Error::non_finite("lambda_schedule")))
    }
}

fn wrap_round(round: usize, e: Error) -> Error {
    Error::Round {
        round,
        source: Box::new(e),
    }
}

fn wrap_client(client: usize, e: Error) -> Error {
    Error::Client {
        client,
        source: Box::new(e),
    }
}

fn for_each_client(
    states: &mut [ClientState],
    serial: bool,
    f: impl Fn(usize, &mut ClientState) -> Result<()> + Sync,
) -> Result<()> {
    let results: Vec<Result<()>> = if serial {
        states.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    } else {
        states.par_iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    };
    first_error(results)
}

fn map_clients<T: Send>(
    states: &[ClientState],
    serial: bool,
    f: impl Fn(usize, &ClientState) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = if serial {
        states.iter().enumerate().map(|(i, s)| f(i, s)).collect()
    } else {
        states.par_iter().enumerate().map(|(i, s)| f(i, s)).collect()
    };
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| wrap_client(i, e)))
        .collect()
}

fn first_error(results: Vec<Result<()>>) -> Result<()> {
    for (i, r) in results.into_iter().enumerate() {
        r.map_err(|e| wrap_client(i, e))?;
    }
    Ok(())
}

/// The matrix a client transmits: its `V_i`, rounded first for the XOR
/// mechanism, then clipped and perturbed per the privacy settings.
pub fn make_payload(v: &FactorMatrix, privacy: &PrivacyConfig, seed: u64) -> Result<FactorMatrix> {
    match privacy.mechanism {
        Mechanism::None => Ok(v.clone()),
        Mechanism::BernoulliXor => {
            let bits = round_factor(v).to_factor();
            apply_noise(&bits, privacy, &privacy.draw(seed)?)
        }
        _ => apply_noise(v, privacy, &privacy.draw(seed)?),
    }
}

fn round_log(
    t: usize,
    states: &[ClientState],
    reg_t: &RegularizationParams,
    cfg: &FederationConfig,
    v_hat: Option<&FactorMatrix>,
    opts: &RunOptions<'_>,
    started: Instant,
) -> Result<RoundLog> {
    let per_client = map_clients(states, opts.serial, |i, s| {
        let loss = local_objective(s, reg_t, &cfg.prox, v_hat)?;
        let rec = boolean_product(&round_factor(&s.u), &round_factor(&s.v))?;
        let fit = Confusion::between(&s.data, &rec)?;
        let signal = match opts.signal {
            Some(sig) => Some(Confusion::between(&sig[i], &rec)?),
            None => None,
        };
        Ok((loss, fit, signal))
    })
    .map_err(|e| wrap_round(t, e))?;

    let mean_local_loss =
        per_client.iter().map(|(l, _, _)| *l).sum::<f64>() / per_client.len() as f64;
    if !mean_local_loss.is_finite() {
        return Err(wrap_round(t, Error::non_finite("local_objective")));
    }
    let fit: Confusion = per_client.iter().map(|(_, c, _)| *c).sum();
    let f1_star = opts
        .signal
        .map(|_| per_client.iter().filter_map(|(_, _, s)| *s).sum::<Confusion>().f1());
    let integrality_gap = match v_hat {
        Some(v) => integrality_gap(v),
        None => states.iter().map(|s| integrality_gap(&s.v)).sum::<f64>() / states.len() as f64,
    };
    Ok(RoundLog {
        round: t,
        mean_local_loss,
        rmsd: fit.rmsd(),
        f1: fit.f1(),
        f1_star,
        integrality_gap,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}
