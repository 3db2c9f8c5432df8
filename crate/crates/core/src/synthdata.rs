//! Planted-tile benchmark data with Bernoulli background and XOR noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::BinaryMatrix;
use crate::rng::{self, cell_uniform, derive_seed, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub rows: usize,
    pub cols: usize,
    pub tiles: usize,
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub tile_density: f64,
    pub background_density: f64,
    pub seed: u64,
}

impl PlantedSpec {
    /// `tiles` blocks of `rows/(2·tiles) × cols/(2·tiles)` at density 0.9 on
    /// an empty background.
    pub fn with_defaults(rows: usize, cols: usize, tiles: usize, seed: u64) -> Self {
        let div = 2 * tiles.max(1);
        Self {
            rows,
            cols,
            tiles,
            tile_rows: (rows / div).max(1),
            tile_cols: (cols / div).max(1),
            tile_density: 0.9,
            background_density: 0.0,
            seed,
        }
    }

    /// Fixed total of 2^16 rows shared by all clients.
    pub fn scarcity(cols: usize, tiles: usize, seed: u64) -> Self {
        Self::with_defaults(1 << 16, cols, tiles, seed)
    }

    /// 500 rows per client.
    pub fn abundance(clients: usize, cols: usize, tiles: usize, seed: u64) -> Self {
        Self::with_defaults(500 * clients, cols, tiles, seed)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rows == 0 || self.cols == 0 {
            out.push(format!("matrix extents must be positive, got {}x{}", self.rows, self.cols));
        }
        if self.tiles > 0 {
            if self.tile_rows == 0 || self.tile_cols == 0 {
                out.push("tile extents must be positive".to_string());
            }
            if self.tile_rows > self.rows || self.tile_cols > self.cols {
                out.push(format!(
                    "tile {}x{} exceeds matrix {}x{}",
                    self.tile_rows, self.tile_cols, self.rows, self.cols
                ));
            }
        }
        if !(self.tile_density > 0.0 && self.tile_density <= 1.0) {
            out.push(format!("tile density must lie in (0, 1], got {}", self.tile_density));
        }
        if !(self.background_density >= 0.0 && self.background_density < 0.5) {
            out.push(format!(
                "background density must lie in [0, 0.5), got {}",
                self.background_density
            ));
        }
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
}

/// XOR flip probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel(f64);

impl NoiseLevel {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::invalid(format!("noise level must lie in [0, 0.5], got {p}")));
        }
        Ok(Self(p))
    }

    pub fn p(&self) -> f64 {
        self.0
    }
}

/// Placement of one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

pub fn tile_layout(spec: &PlantedSpec) -> Result<Vec<Tile>> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, &[tag::TILES]);
    Ok((0..spec.tiles)
        .map(|_| Tile {
            row: rng.random_range(0..=spec.rows - spec.tile_rows),
            col: rng.random_range(0..=spec.cols - spec.tile_cols),
            rows: spec.tile_rows,
            cols: spec.tile_cols,
        })
        .collect())
}

/// Returns `(data, mask)`. Background cells are Bernoulli with the
/// background density; a cell covered by a tile is additionally set by a
/// Bernoulli draw at the tile density for each covering tile. The mask
/// marks every covered cell.
pub fn generate_planted(spec: &PlantedSpec) -> Result<(BinaryMatrix, BinaryMatrix)> {
    let tiles = tile_layout(spec)?;
    let cols = spec.cols as u64;
    let mut data = vec![0u8; spec.rows * spec.cols];
    let mut mask = vec![0u8; spec.rows * spec.cols];

    if spec.background_density > 0.0 {
        let key = derive_seed(spec.seed, &[tag::BACKGROUND]);
        for (i, cell) in data.iter_mut().enumerate() {
            if cell_uniform(key, i as u64) < spec.background_density {
                *cell = 1;
            }
        }
    }
    for (t, tile) in tiles.iter().enumerate() {
        let key = derive_seed(spec.seed, &[tag::TILE_FILL, t as u64]);
        for r in tile.row..tile.row + tile.rows {
            for c in tile.col..tile.col + tile.cols {
                let idx = r * spec.cols + c;
                mask[idx] = 1;
                if cell_uniform(key, r as u64 * cols + c as u64) < spec.tile_density {
                    data[idx] = 1;
                }
            }
        }
    }
    Ok((
        BinaryMatrix::from_dense(spec.rows, spec.cols, &data)?,
        BinaryMatrix::from_dense(spec.rows, spec.cols, &mask)?,
    ))
}

/// Flips each cell independently with probability `level.p()`. Each cell's
/// draw depends only on `(seed, row, col)`.
pub fn apply_xor_noise(a: &BinaryMatrix, level: NoiseLevel, seed: u64) -> BinaryMatrix {
    if level.p() == 0.0 {
        return a.clone();
    }
    let key = derive_seed(seed, &[tag::XOR]);
    let mut dense = a.to_dense();
    for (i, cell) in dense.iter_mut().enumerate() {
        if cell_uniform(key, i as u64) < level.p() {
            *cell ^= 1;
        }
    }
    BinaryMatrix::from_dense(a.rows(), a.cols(), &dense).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_density_tile_equals_mask() {
        let spec = PlantedSpec {
            rows: 30,
            cols: 20,
            tiles: 1,
            tile_rows: 7,
            tile_cols: 5,
            tile_density: 1.0,
            background_density: 0.0,
            seed: 4,
        };
        let (data, mask) = generate_planted(&spec).unwrap();
        assert_eq!(data, mask);
        assert_eq!(mask.nnz(), 35);
        let t = tile_layout(&spec).unwrap()[0];
        for &(r, c) in mask.entries() {
            assert!((t.row..t.row + 7).contains(&r) && (t.col..t.col + 5).contains(&c));
        }
    }

    #[test]
    fn tile_density_concentrates() {
        for seed in 0..10 {
            let spec = PlantedSpec::with_defaults(400, 100, 4, seed);
            let (data, mask) = generate_planted(&spec).unwrap();
            let inside = mask.nnz();
            let hits = data.overlap(&mask).unwrap();
            let frac = hits as f64 / inside as f64;
            let sd = (0.9 * 0.1 / inside as f64).sqrt();
            // overlapping tiles get more than one draw, which only raises the rate
            assert!(frac > 0.9 - 3.0 * sd && frac < 0.9 + 3.0 * sd + 0.05, "{frac}");
            assert_eq!(data.nnz(), hits, "no ones outside the tiles");
        }
    }

    #[test]
    fn no_tiles_is_pure_background() {
        let mut spec = PlantedSpec::with_defaults(50, 40, 0, 1);
        spec.background_density = 0.2;
        let (data, mask) = generate_planted(&spec).unwrap();
        assert_eq!(mask.nnz(), 0);
        assert!(data.nnz() > 0);
    }

    #[test]
    fn rejects_oversized_tiles_and_bad_densities() {
        let mut spec = PlantedSpec::with_defaults(10, 10, 1, 0);
        spec.tile_rows = 11;
        assert!(generate_planted(&spec).is_err());
        let mut spec = PlantedSpec::with_defaults(10, 10, 1, 0);
        spec.background_density = 0.5;
        spec.tile_density = 0.0;
        assert_eq!(spec.violations().len(), 2);
        assert!(NoiseLevel::new(0.51).is_err());
        assert!(NoiseLevel::new(-0.1).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = PlantedSpec::with_defaults(100, 60, 3, 12);
        assert_eq!(generate_planted(&spec).unwrap(), generate_planted(&spec).unwrap());
        let other = PlantedSpec { seed: 13, ..spec };
        assert_ne!(generate_planted(&spec).unwrap().0, generate_planted(&other).unwrap().0);
    }

    #[test]
    fn xor_noise_statistics() {
        let a = BinaryMatrix::zeros(100, 100);
        assert_eq!(apply_xor_noise(&a, NoiseLevel::new(0.0).unwrap(), 1), a);

        let half = apply_xor_noise(&a, NoiseLevel::new(0.5).unwrap(), 2);
        let sd = (0.25f64 / 1e4).sqrt();
        assert!((half.density() - 0.5).abs() < 3.0 * sd);

        let spec = PlantedSpec::with_defaults(100, 100, 3, 5);
        let (data, _) = generate_planted(&spec).unwrap();
        let p: f64 = 0.1;
        let sd = (p * (1.0 - p) * 1e4).sqrt();
        for seed in 0..10 {
            let noisy = apply_xor_noise(&data, NoiseLevel::new(p).unwrap(), seed);
            let flips = noisy.hamming(&data).unwrap() as f64;
            assert!((flips - p * 1e4).abs() < 3.0 * sd, "{flips}");
        }
        let once = apply_xor_noise(&data, NoiseLevel::new(p).unwrap(), 100);
        let twice = apply_xor_noise(&once, NoiseLevel::new(p).unwrap(), 101);
        assert_ne!(twice, data);
    }

    #[test]
    fn xor_noise_is_reproducible_per_cell() {
        let spec = PlantedSpec::with_defaults(60, 30, 2, 8);
        let (data, _) = generate_planted(&spec).unwrap();
        let level = NoiseLevel::new(0.3).unwrap();
        let a = apply_xor_noise(&data, level, 21);
        assert_eq!(a, apply_xor_noise(&data, level, 21));
        // the flip pattern does not depend on the input content
        let z = apply_xor_noise(&BinaryMatrix::zeros(60, 30), level, 21);
        assert_eq!(a.hamming(&data).unwrap(), z.nnz());
    }
}
