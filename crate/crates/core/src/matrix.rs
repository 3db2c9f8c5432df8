//! Binary (sparse) and real (dense) matrices plus the handful of kernels
//! the factorization needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 0/1 matrix stored as sorted, duplicate-free `(row, col)` coordinates
/// of its ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize)>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        let entries = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .collect();
        Self {
            rows,
            cols,
            entries,
        }
    }

    /// Builds a matrix from coordinates in any order. Duplicates and
    /// out-of-range coordinates are rejected.
    pub fn from_coords(
        rows: usize,
        cols: usize,
        mut entries: Vec<(usize, usize)>,
    ) -> Result<Self> {
        for &(r, c) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::OutOfBounds {
                    row: r,
                    col: c,
                    rows,
                    cols,
                });
            }
        }
        entries.sort_unstable();
        if let Some(w) = entries.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!(
                "duplicate coordinate ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    /// Row-major dense 0/1 input; any nonzero byte counts as a one.
    pub fn from_dense(rows: usize, cols: usize, dense: &[u8]) -> Result<Self> {
        if dense.len() != rows * cols {
            return Err(Error::invalid(format!(
                "dense buffer of length {} for {rows}x{cols} matrix",
                dense.len()
            )));
        }
        let entries = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| (i / cols, i % cols))
            .collect();
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    /// Convenience constructor from nested rows, mostly for tests.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut dense = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(Error::invalid("ragged rows"));
            }
            dense.extend_from_slice(r.as_ref());
        }
        Self::from_dense(rows.len(), cols, &dense)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn density(&self) -> f64 {
        let cells = self.rows * self.cols;
        if cells == 0 {
            0.0
        } else {
            self.nnz() as f64 / cells as f64
        }
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.entries.binary_search(&(row, col)).is_ok()
    }

    /// Column indices of the ones in `row`, ascending.
    pub fn row_cols(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        let lo = self.entries.partition_point(|&(r, _)| r < row);
        let hi = self.entries.partition_point(|&(r, _)| r <= row);
        self.entries[lo..hi].iter().map(|&(_, c)| c)
    }

    pub fn to_dense(&self) -> Vec<u8> {
        let mut dense = vec![0u8; self.rows * self.cols];
        for &(r, c) in &self.entries {
            dense[r * self.cols + c] = 1;
        }
        dense
    }

    /// Lifts the matrix to reals.
    pub fn to_factor(&self) -> FactorMatrix {
        let mut out = FactorMatrix::zeros(self.rows, self.cols);
        for &(r, c) in &self.entries {
            out.data[r * self.cols + c] = 1.0;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut entries: Vec<_> = self.entries.iter().map(|&(r, c)| (c, r)).collect();
        entries.sort_unstable();
        Self {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    pub fn complement(&self) -> Self {
        let dense = self.to_dense();
        let flipped: Vec<u8> = dense.iter().map(|&v| 1 - v).collect();
        Self::from_dense(self.rows, self.cols, &flipped).expect("shape preserved")
    }

    /// Number of cells where `self` and `other` differ.
    pub fn hamming(&self, other: &Self) -> Result<usize> {
        self.ensure_same_shape(other, "hamming")?;
        let (mut i, mut j, mut diff) = (0, 0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => {
                    diff += 1;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    diff += 1;
                    j += 1;
                }
            }
        }
        Ok(diff + (a.len() - i) + (b.len() - j))
    }

    /// Number of cells that are one in both matrices.
    pub fn overlap(&self, other: &Self) -> Result<usize> {
        self.ensure_same_shape(other, "overlap")?;
        let (mut i, mut j, mut both) = (0, 0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Equal => {
                    both += 1;
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        Ok(both)
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[BinaryMatrix]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut entries = Vec::with_capacity(parts.iter().map(|p| p.nnz()).sum());
        let mut offset = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::DimensionMismatch {
                    op: "vstack",
                    left: (offset, cols),
                    right: p.shape(),
                });
            }
            entries.extend(p.entries.iter().map(|&(r, c)| (r + offset, c)));
            offset += p.rows;
        }
        Ok(Self {
            rows: offset,
            cols,
            entries,
        })
    }

    /// New matrix whose `i`-th row is row `order[i]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> Result<Self> {
        let mut entries = Vec::new();
        for (new_r, &old_r) in order.iter().enumerate() {
            if old_r >= self.rows {
                return Err(Error::OutOfBounds {
                    row: old_r,
                    col: 0,
                    rows: self.rows,
                    cols: self.cols,
                });
            }
            entries.extend(self.row_cols(old_r).map(|c| (new_r, c)));
        }
        entries.sort_unstable();
        Ok(Self {
            rows: order.len(),
            cols: self.cols,
            entries,
        })
    }

    fn ensure_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

/// Boolean (OR-of-ANDs) product.
pub fn boolean_product(u: &BinaryMatrix, v: &BinaryMatrix) -> Result<BinaryMatrix> {
    if u.cols != v.rows {
        return Err(Error::DimensionMismatch {
            op: "boolean_product",
            left: u.shape(),
            right: v.shape(),
        });
    }
    let m = v.cols;
    let mut entries = Vec::new();
    let mut row_mask = vec![false; m];
    let mut start = 0;
    while start < u.entries.len() {
        let r = u.entries[start].0;
        let end = start + u.entries[start..].partition_point(|&(rr, _)| rr == r);
        row_mask.iter_mut().for_each(|b| *b = false);
        for &(_, l) in &u.entries[start..end] {
            for c in v.row_cols(l) {
                row_mask[c] = true;
            }
        }
        entries.extend(
            row_mask
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(c, _)| (r, c)),
        );
        start = end;
    }
    Ok(BinaryMatrix {
        rows: u.rows,
        cols: m,
        entries,
    })
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FactorMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out.data[i * n + i] = 1.0;
        }
        out
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "buffer of length {} for {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(Error::invalid("ragged rows"));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_finite(&self, stage: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::non_finite(stage))
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two equally shaped matrices.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_shape(other, "zip_map")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self - a` with `a` lifted to reals.
    pub fn sub_binary(&self, a: &BinaryMatrix) -> Result<Self> {
        if self.shape() != a.shape() {
            return Err(Error::DimensionMismatch {
                op: "sub_binary",
                left: self.shape(),
                right: a.shape(),
            });
        }
        let mut out = self.clone();
        for &(r, c) in a.entries() {
            out.data[r * self.cols + c] -= 1.0;
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (k, m) = (self.cols, other.cols);
        let mut out = Self::zeros(k, m);
        for r in 0..self.rows {
            let a = self.row(r);
            let b = other.row(r);
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * m..(i + 1) * m];
                for (d, &bj) in dst.iter_mut().zip(b) {
                    *d += ai * bj;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let a = self.row(r);
            for s in 0..other.rows {
                let b = other.row(s);
                out.data[r * other.rows + s] = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        Ok(out)
    }

    pub fn frobenius_sq(&self) -> f64 {
        frobenius_sq(self)
    }

    fn ensure_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

/// Standard matrix product.
pub fn real_product(x: &FactorMatrix, y: &FactorMatrix) -> Result<FactorMatrix> {
    if x.cols != y.rows {
        return Err(Error::DimensionMismatch {
            op: "real_product",
            left: x.shape(),
            right: y.shape(),
        });
    }
    let m = y.cols;
    let mut out = FactorMatrix::zeros(x.rows, m);
    for r in 0..x.rows {
        let dst = &mut out.data[r * m..(r + 1) * m];
        for (l, &xl) in x.row(r).iter().enumerate() {
            if xl == 0.0 {
                continue;
            }
            for (d, &yv) in dst.iter_mut().zip(y.row(l)) {
                *d += xl * yv;
            }
        }
    }
    Ok(out)
}

pub fn frobenius_sq(x: &FactorMatrix) -> f64 {
    x.data.iter().map(|v| v * v).sum()
}

pub const SPECTRAL_TOL: f64 = 1e-9;
pub const SPECTRAL_MAX_ITER: usize = 1000;

/// Largest singular value by power iteration on `XᵀX`, starting from the
/// normalized all-ones vector.
pub fn spectral_norm(x: &FactorMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::invalid("spectral norm of an empty matrix"));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    x.check_finite("spectral_norm")?;
    let n = x.cols;
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = gram_apply(x, &v);
    if norm(&w) == 0.0 {
        // all-ones is in the null space; restart on the heaviest column
        let heaviest = (0..n)
            .map(|c| (c, (0..x.rows).map(|r| x.get(r, c).powi(2)).sum::<f64>()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if heaviest.1 == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|e| *e = 0.0);
        v[heaviest.0] = 1.0;
        w = gram_apply(x, &v);
    }
    let mut estimate = dot(&v, &w);
    for _ in 0..max_iter {
        let wn = norm(&w);
        if wn == 0.0 {
            break;
        }
        v.iter_mut().zip(&w).for_each(|(vi, &wi)| *vi = wi / wn);
        w = gram_apply(x, &v);
        let next = dot(&v, &w);
        let converged = (next - estimate).abs() <= tol * next.abs().max(f64::MIN_POSITIVE);
        estimate = next;
        if converged {
            break;
        }
    }
    Ok(estimate.max(0.0).sqrt())
}

fn gram_apply(x: &FactorMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.cols];
    for r in 0..x.rows {
        let row = x.row(r);
        let xv: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a * xv;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn bin(rows: &[&[u8]]) -> BinaryMatrix {
        BinaryMatrix::from_rows(rows).unwrap()
    }

    fn real(rows: &[&[f64]]) -> FactorMatrix {
        FactorMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn boolean_product_examples() {
        assert_eq!(boolean_product(&bin(&[&[1]]), &bin(&[&[1]])).unwrap(), bin(&[&[1]]));
        let saturated = boolean_product(&bin(&[&[1, 1]]), &bin(&[&[1], &[1]])).unwrap();
        assert_eq!(saturated, bin(&[&[1]]));
        let eye = bin(&[&[1, 0], &[0, 1]]);
        assert_eq!(boolean_product(&eye, &eye).unwrap(), eye);
    }

    #[test]
    fn boolean_product_rejects_mismatch() {
        let err = boolean_product(&BinaryMatrix::zeros(2, 3), &BinaryMatrix::zeros(2, 3))
            .unwrap_err()
            .to_string();
        assert!(err.contains("(2, 3)"), "{err}");
    }

    #[test]
    fn real_product_examples() {
        let p = real_product(&FactorMatrix::identity(2), &real(&[&[2., 3.], &[4., 5.]])).unwrap();
        assert_eq!(p, real(&[&[2., 3.], &[4., 5.]]));
        let p = real_product(&real(&[&[1., 2.]]), &real(&[&[3.], &[4.]])).unwrap();
        assert_eq!(p, real(&[&[11.]]));
        let p = real_product(&FactorMatrix::zeros(2, 3), &real(&[&[1.], &[2.], &[3.]])).unwrap();
        assert_eq!(p, FactorMatrix::zeros(2, 1));
        assert!(real_product(&FactorMatrix::zeros(2, 3), &FactorMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn transposed_products_agree_with_real_product() {
        let mut rng = crate::rng::stream(1, &[]);
        let a = FactorMatrix::from_fn(4, 3, |_, _| rng.random::<f64>() - 0.5);
        let b = FactorMatrix::from_fn(4, 5, |_, _| rng.random::<f64>() - 0.5);
        let c = FactorMatrix::from_fn(6, 3, |_, _| rng.random::<f64>() - 0.5);
        let atb = real_product(&a.transpose(), &b).unwrap();
        let act = real_product(&a, &c.transpose()).unwrap();
        for (x, y) in a.t_matmul(&b).unwrap().as_slice().iter().zip(atb.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
        for (x, y) in a.matmul_t(&c).unwrap().as_slice().iter().zip(act.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_sq(&FactorMatrix::zeros(3, 2)), 0.0);
        assert_eq!(frobenius_sq(&FactorMatrix::filled(2, 2, 1.0)), 4.0);
        assert_eq!(frobenius_sq(&real(&[&[3., 4.]])), 25.0);
    }

    #[test]
    fn spectral_norm_examples() {
        let s = spectral_norm(&FactorMatrix::identity(4), SPECTRAL_TOL, SPECTRAL_MAX_ITER).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let s = spectral_norm(&real(&[&[3., 0.], &[0., 4.]]), SPECTRAL_TOL, SPECTRAL_MAX_ITER).unwrap();
        assert!((s - 4.0).abs() < 1e-6);
        // ones vector is in the null space of [[1, -1]]
        let s = spectral_norm(&real(&[&[1., -1.]]), SPECTRAL_TOL, SPECTRAL_MAX_ITER).unwrap();
        assert!((s - 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(
            spectral_norm(&FactorMatrix::zeros(2, 2), SPECTRAL_TOL, SPECTRAL_MAX_ITER).unwrap(),
            0.0
        );
    }

    #[test]
    fn spectral_norm_errors() {
        assert!(spectral_norm(&FactorMatrix::zeros(0, 3), 1e-9, 10).is_err());
        assert!(spectral_norm(&FactorMatrix::identity(2), 0.0, 10).is_err());
        let nan = real(&[&[f64::NAN]]);
        assert!(matches!(
            spectral_norm(&nan, 1e-9, 10),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn spectral_norm_matches_dense_svd() {
        let mut rng = crate::rng::stream(11, &[]);
        for _ in 0..20 {
            let x = FactorMatrix::from_fn(5, 3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let oracle = nalgebra::DMatrix::from_row_slice(5, 3, x.as_slice())
                .singular_values()
                .max();
            let s = spectral_norm(&x, SPECTRAL_TOL, SPECTRAL_MAX_ITER).unwrap();
            assert!((s - oracle).abs() < 1e-6, "{s} vs {oracle}");
        }
    }

    #[test]
    fn dense_round_trip_and_select_rows() {
        let a = bin(&[&[1, 0, 1], &[0, 0, 0], &[0, 1, 1]]);
        assert_eq!(BinaryMatrix::from_dense(3, 3, &a.to_dense()).unwrap(), a);
        let swapped = a.select_rows(&[2, 0]).unwrap();
        assert_eq!(swapped, bin(&[&[0, 1, 1], &[1, 0, 1]]));
        let stacked = BinaryMatrix::vstack(&[swapped, bin(&[&[0, 0, 0]])]).unwrap();
        assert_eq!(stacked.shape(), (3, 3));
        assert_eq!(stacked.nnz(), 4);
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn coords_validation() {
        assert!(BinaryMatrix::from_coords(2, 2, vec![(0, 0), (0, 0)]).is_err());
        assert!(matches!(
            BinaryMatrix::from_coords(2, 2, vec![(2, 0)]),
            Err(Error::OutOfBounds { .. })
        ));
        let m = BinaryMatrix::from_coords(2, 2, vec![(1, 1), (0, 1)]).unwrap();
        assert_eq!(m.entries(), &[(0, 1), (1, 1)]);
    }

    fn dense_bits(rows: usize, cols: usize) -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0u8..=1, rows * cols)
    }

    proptest! {
        #[test]
        fn boolean_product_is_thresholded_integer_product(
            u in dense_bits(6, 4),
            v in dense_bits(4, 5),
        ) {
            let ub = BinaryMatrix::from_dense(6, 4, &u).unwrap();
            let vb = BinaryMatrix::from_dense(4, 5, &v).unwrap();
            let got = boolean_product(&ub, &vb).unwrap().to_dense();
            for i in 0..6 {
                for j in 0..5 {
                    let count: u32 = (0..4).map(|l| (u[i * 4 + l] * v[l * 5 + j]) as u32).sum();
                    prop_assert_eq!(got[i * 5 + j], (count >= 1) as u8);
                }
            }
        }

        #[test]
        fn sparse_dense_round_trip(bits in dense_bits(7, 9)) {
            let m = BinaryMatrix::from_dense(7, 9, &bits).unwrap();
            let back: Vec<u8> = m.to_dense().to_vec();
            let normalized: Vec<u8> = bits.iter().map(|&b| (b != 0) as u8).collect();
            prop_assert_eq!(back, normalized);
            prop_assert_eq!(BinaryMatrix::from_coords(7, 9, m.entries().to_vec()).unwrap(), m);
        }

        #[test]
        fn real_product_is_associative(
            a in proptest::collection::vec(-1.0f64..1.0, 3 * 4),
            b in proptest::collection::vec(-1.0f64..1.0, 4 * 2),
            c in proptest::collection::vec(-1.0f64..1.0, 2 * 5),
        ) {
            let a = FactorMatrix::from_vec(3, 4, a).unwrap();
            let b = FactorMatrix::from_vec(4, 2, b).unwrap();
            let c = FactorMatrix::from_vec(2, 5, c).unwrap();
            let left = real_product(&real_product(&a, &b).unwrap(), &c).unwrap();
            let right = real_product(&a, &real_product(&b, &c).unwrap()).unwrap();
            let scale = frobenius_sq(&left).sqrt().max(1.0);
            for (x, y) in left.as_slice().iter().zip(right.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn spectral_norm_is_bracketed_by_frobenius(
            vals in proptest::collection::vec(-2.0f64..2.0, 4 * 3),
        ) {
            let x = FactorMatrix::from_vec(4, 3, vals).unwrap();
            let s = spectral_norm(&x, SPECTRAL_TOL, SPECTRAL_MAX_ITER).unwrap();
            let f = frobenius_sq(&x).sqrt();
            prop_assert!(s <= f * (1.0 + 1e-9) + 1e-12);
            prop_assert!(s >= f / 3f64.sqrt() * (1.0 - 1e-6) - 1e-12);
        }
    }
}
