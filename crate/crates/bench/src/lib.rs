//! Shared fixtures for the benchmarks.

use felb_core::federation::partition;
use felb_core::{generate_planted, BinaryMatrix, ClientState, FactorMatrix, PlantedSpec};

/// Planted-tile matrix of the given size with `k` tiles.
pub fn planted(rows: usize, cols: usize, k: usize) -> BinaryMatrix {
    generate_planted(&PlantedSpec::with_defaults(rows, cols, k, 7))
        .expect("valid spec")
        .0
}

pub fn client(rows: usize, cols: usize, k: usize) -> ClientState {
    ClientState::initialize(planted(rows, cols, k), k, 7)
}

pub fn clients(rows: usize, cols: usize, k: usize, c: usize) -> Vec<BinaryMatrix> {
    partition(&planted(rows, cols, k), c, 7).expect("enough rows").parts
}

/// Deterministic values in `[0, 1)` without an RNG dependency.
pub fn ramp(rows: usize, cols: usize) -> FactorMatrix {
    FactorMatrix::from_fn(rows, cols, |r, c| ((r * 31 + c * 17) % 97) as f64 / 97.0)
}
