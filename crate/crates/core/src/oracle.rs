//! Slow reference computations used to check the fast paths.
//!
//! Nothing here shares code with the kernels it verifies.

use crate::matrix::{BinaryMatrix, FactorMatrix};

/// Objective minimized by the Boolean prox, written out directly.
fn prox_objective(x: f64, y: f64, kappa: f64, lambda: f64) -> f64 {
    let zero_net = kappa * y.abs() + 0.5 * lambda * y * y;
    let one_net = kappa * (y - 1.0).abs() + 0.5 * lambda * (y - 1.0) * (y - 1.0);
    0.5 * (x - y) * (x - y) + zero_net.min(one_net)
}

fn ternary_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo < 1e-13 {
            break;
        }
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

/// Numerical minimizer of `½(x-y)² + min{κ|y| + ½λy², κ|y-1| + ½λ(y-1)²}`
/// over `y ∈ [-2, 3]`.
///
/// The objective is convex between the breakpoints {0, ½, 1}; a coarse
/// grid scan seeds the search and ternary search refines each convex piece.
pub fn prox_oracle(x: f64, kappa: f64, lambda: f64) -> f64 {
    let f = |y: f64| prox_objective(x, y, kappa, lambda);
    let mut best_y = -2.0;
    let mut best = f(best_y);
    for i in 0..=5000 {
        let y = -2.0 + i as f64 * 1e-3;
        let v = f(y);
        if v < best {
            best = v;
            best_y = y;
        }
    }
    for (lo, hi) in [(-2.0, 0.0), (0.0, 0.5), (0.5, 1.0), (1.0, 3.0)] {
        let y = ternary_min(f, lo, hi);
        let v = f(y);
        if v < best {
            best = v;
            best_y = y;
        }
    }
    best_y
}

/// Central finite-difference gradient of `g` at `x`.
pub fn finite_difference(x: &FactorMatrix, h: f64, g: impl Fn(&FactorMatrix) -> f64) -> FactorMatrix {
    let mut out = FactorMatrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = g(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let down = g(&probe);
        probe.as_mut_slice()[i] = orig;
        out.as_mut_slice()[i] = (up - down) / (2.0 * h);
    }
    out
}

/// `‖A − UV‖²_F` computed with plain index loops.
pub fn squared_loss_naive(a: &BinaryMatrix, u: &FactorMatrix, v: &FactorMatrix) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let mut uv = 0.0;
            for l in 0..u.cols() {
                uv += u.get(i, l) * v.get(l, j);
            }
            let target = if a.get(i, j) { 1.0 } else { 0.0 };
            total += (target - uv) * (target - uv);
        }
    }
    total
}

/// Exhaustive threshold search evaluated cell by cell. Returns
/// `(alpha, beta, mismatches)`.
pub fn threshold_search_naive(
    us: &[FactorMatrix],
    v: &FactorMatrix,
    parts: &[BinaryMatrix],
    grid: &[f64],
) -> (f64, f64, usize) {
    let mut best = (grid[0], grid[0], usize::MAX);
    for &alpha in grid {
        for &beta in grid {
            let mut loss = 0;
            for (u, a) in us.iter().zip(parts) {
                for i in 0..a.rows() {
                    for j in 0..a.cols() {
                        let mut rec = false;
                        for l in 0..u.cols() {
                            if u.get(i, l) >= alpha && v.get(l, j) >= beta {
                                rec = true;
                            }
                        }
                        if rec != a.get(i, j) {
                            loss += 1;
                        }
                    }
                }
            }
            if loss < best.2 {
                best = (alpha, beta, loss);
            }
        }
    }
    best
}
