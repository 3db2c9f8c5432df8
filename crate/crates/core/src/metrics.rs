//! Reconstruction quality measures and the per-round log record.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BinaryMatrix, FactorMatrix};

/// Counts that determine every metric of a reconstruction against a
/// reference. Counts add across client blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub cells: usize,
    pub reference_ones: usize,
    pub predicted_ones: usize,
    pub true_positives: usize,
}

impl Confusion {
    pub fn between(reference: &BinaryMatrix, predicted: &BinaryMatrix) -> Result<Self> {
        let tp = reference.overlap(predicted)?;
        Ok(Self {
            cells: reference.rows() * reference.cols(),
            reference_ones: reference.nnz(),
            predicted_ones: predicted.nnz(),
            true_positives: tp,
        })
    }

    pub fn hamming(&self) -> usize {
        self.reference_ones + self.predicted_ones - 2 * self.true_positives
    }

    pub fn rmsd(&self) -> f64 {
        if self.cells == 0 {
            return 0.0;
        }
        (self.hamming() as f64 / self.cells as f64).sqrt()
    }

    pub fn f1(&self) -> f64 {
        let denom = self.reference_ones + self.predicted_ones;
        if denom == 0 {
            return 1.0;
        }
        2.0 * self.true_positives as f64 / denom as f64
    }
}

impl std::ops::Add for Confusion {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            cells: self.cells + o.cells,
            reference_ones: self.reference_ones + o.reference_ones,
            predicted_ones: self.predicted_ones + o.predicted_ones,
            true_positives: self.true_positives + o.true_positives,
        }
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Root mean squared deviation per cell.
pub fn rmsd(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<f64> {
    Ok(Confusion::between(a, b)?.rmsd())
}

/// F1 with 1 as the positive class; two all-zero matrices score 1.
pub fn f1(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<f64> {
    Ok(Confusion::between(a, b)?.f1())
}

/// F1 of `b` against the noiseless planted mask.
pub fn f1_star(mask: &BinaryMatrix, b: &BinaryMatrix) -> Result<f64> {
    f1(mask, b)
}

/// Mean distance of the entries to the nearest of {0, 1}.
pub fn integrality_gap(x: &FactorMatrix) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.as_slice().iter().map(|&v| v.abs().min((v - 1.0).abs())).sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub mean_local_loss: f64,
    pub rmsd: f64,
    pub f1: f64,
    pub f1_star: Option<f64>,
    pub integrality_gap: f64,
    pub elapsed_seconds: f64,
}

impl RoundLog {
    /// Equality on everything except wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.round == other.round
            && self.mean_local_loss.to_bits() == other.mean_local_loss.to_bits()
            && self.rmsd.to_bits() == other.rmsd.to_bits()
            && self.f1.to_bits() == other.f1.to_bits()
            && self.f1_star.map(f64::to_bits) == other.f1_star.map(f64::to_bits)
            && self.integrality_gap.to_bits() == other.integrality_gap.to_bits()
    }
}

pub const HISTORY_HEADER: &str =
    "round,mean_local_loss,global_rmsd,f1,f1_star,integrality_gap_vhat,elapsed_seconds";

/// Formats like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

/// Writes one CSV row per round. With `include_timing` false the
/// `elapsed_seconds` field is left empty so the file depends only on the
/// inputs.
pub fn write_history_csv<W: Write>(rounds: &[RoundLog], mut w: W, include_timing: bool) -> Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in rounds {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.round,
            format_sig9(r.mean_local_loss),
            format_sig9(r.rmsd),
            format_sig9(r.f1),
            r.f1_star.map(format_sig9).unwrap_or_default(),
            format_sig9(r.integrality_gap),
            if include_timing {
                format_sig9(r.elapsed_seconds)
            } else {
                String::new()
            }
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a file written by [`write_history_csv`]. Missing timing reads as 0.
pub fn read_history_csv(text: &str) -> Result<Vec<RoundLog>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HISTORY_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "unexpected history header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.into(),
        };
        if f.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad("bad number")) };
        out.push(RoundLog {
            round: f[0].parse().map_err(|_| bad("bad round"))?,
            mean_local_loss: num(f[1])?,
            rmsd: num(f[2])?,
            f1: num(f[3])?,
            f1_star: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            integrality_gap: num(f[5])?,
            elapsed_seconds: if f[6].is_empty() { 0.0 } else { num(f[6])? },
        });
    }
    Ok(out)
}
