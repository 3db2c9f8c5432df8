//! Federated Boolean matrix factorization.
//!
//! Each client holds a horizontal block `A_i` of a binary matrix and fits
//! relaxed factors `U_i V_i` by inertial proximal alternating steps under a
//! binary-inducing elastic-net regularizer. Every few rounds the clients send
//! their coefficient matrices, optionally privatized, to a server that
//! averages them and applies the Boolean proximal map. The shared result is
//! broadcast back and clients keep going from it.
//!
//! Besides the solver the crate ships baseline aggregation schemes for
//! arbitrary local factorizers, a planted-tile data generator, evaluation
//! metrics and MatrixMarket I/O.

pub mod baselines;
pub mod client;
pub mod error;
pub mod federation;
pub mod io;
pub mod matrix;
pub mod metrics;
#[cfg(any(test, feature = "oracles"))]
pub mod oracle;
pub mod privacy;
pub mod proximal;
pub mod rng;
pub mod server;
pub mod synthdata;

pub use baselines::{
    agg_logical_or, agg_majority_vote, agg_rounded_average, prune_unused, reference_local_factorizer,
    run_aggregated_bmf, threshold_round_search, AggregatedRun, Aggregation, LocalFactorizer,
    ReferenceFactorizer, ThresholdFit,
};
pub use client::{
    grad_u, grad_v, lipschitz_eta_u, lipschitz_eta_v, local_objective, local_round, mu_eta_u,
    mu_eta_v, ClientState, StepRule, StepVariant,
};
pub use error::{Error, Result};
pub use federation::{
    partition, round_factors, run_centralized, run_federated, run_federated_with, FederationConfig, Partition,
    RunHistory, RunOptions,
};
pub use matrix::{boolean_product, frobenius_sq, real_product, spectral_norm, BinaryMatrix, FactorMatrix};
pub use metrics::{f1, f1_star, integrality_gap, rmsd, RoundLog};
pub use privacy::{apply_noise, clip, Mechanism, NoiseDraw, PrivacyConfig};
pub use proximal::{elb_value, prox_elb, prox_proximity, ProximityParams, RegularizationParams};
pub use server::{proximal_aggregate, AggregateState};
pub use synthdata::{apply_xor_noise, generate_planted, NoiseLevel, PlantedSpec};
