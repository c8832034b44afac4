//! Devetak-Winter key rate from a guessing-probability bound and the TT table.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// TT tables whose total differs from one by at most this much are
/// renormalized; larger defects are rejected.
pub const NORMALIZATION_TOL: f64 = 1e-6;
/// Entries down to this (negative) value are treated as round-off zeros.
const NEGATIVE_TOL: f64 = 1e-14;

/// `H(X|Y)` in bits, with `X` Alice's bin (rows) and `Y` Bob's (columns).
pub fn cond_entropy_xy(tt: &DMatrix<f64>) -> Result<f64> {
    if tt.nrows() != tt.ncols() || tt.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            expected: tt.nrows().max(1),
            found: tt.ncols(),
        });
    }
    if let Some(&bad) = tt.iter().find(|&&x| !x.is_finite() || x < -NEGATIVE_TOL) {
        return Err(Error::Data(format!("TT entry {bad} is negative or not finite")));
    }
    let total: f64 = tt.iter().map(|&x| x.max(0.0)).sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Data(format!("TT entries sum to {total}, not 1")));
    }
    let mut h = 0.0;
    for col in tt.column_iter() {
        let py: f64 = col.iter().map(|&x| x.max(0.0)).sum::<f64>() / total;
        for &x in col.iter() {
            let pxy = x.max(0.0) / total;
            if pxy > 0.0 {
                h -= pxy * (pxy / py).log2();
            }
        }
    }
    Ok(h.max(0.0))
}

/// `(rate, max(rate, 0))` with `rate = -log2(p_guess) - leak`.
pub fn devetak_winter(p_guess: f64, leak: f64) -> Result<(f64, f64)> {
    if !(p_guess > 0.0 && p_guess <= 1.0 + 1e-9) {
        return Err(Error::domain("p_guess", p_guess, "(0, 1]"));
    }
    if !(leak >= 0.0) {
        return Err(Error::domain("leak", leak, "[0, inf)"));
    }
    let rate = -p_guess.min(1.0).log2() - leak;
    Ok((rate, rate.max(0.0)))
}

/// Per-subspace contribution to the total rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceRate {
    pub block: Vec<usize>,
    pub weight: f64,
    pub p_guess_ub: f64,
    pub hmin_bits: f64,
    pub leak_bits: f64,
    pub rate_bits: f64,
}

/// `(sum_m P_m max(K_m, 0), sum_m P_m K_m)`.
pub fn subspace_rate(parts: &[SubspaceRate]) -> Result<(f64, f64)> {
    let total_weight: f64 = parts.iter().map(|p| p.weight).sum();
    if parts.iter().any(|p| !(p.weight >= 0.0)) || total_weight > 1.0 + NORMALIZATION_TOL {
        return Err(Error::Data(format!(
            "subspace weights must be non-negative and sum to at most 1 (sum {total_weight})"
        )));
    }
    let clamped = parts.iter().map(|p| p.weight * p.rate_bits.max(0.0)).sum();
    let unclamped = parts.iter().map(|p| p.weight * p.rate_bits).sum();
    Ok((clamped, unclamped))
}

/// Result of one rate evaluation.
///
/// For a subspace run the top-level `hmin_bits`, `leak_bits` and `rate_bits`
/// are `P_m`-weighted sums over the subspaces, `p_guess_ub` is
/// `2^-hmin_bits`, and `clamped_rate` clamps each subspace separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub dim: usize,
    pub block_size: Option<usize>,
    pub visibility: Option<f64>,
    pub preset: String,
    pub p_guess_ub: f64,
    pub hmin_bits: f64,
    pub leak_bits: f64,
    pub rate_bits: f64,
    pub clamped_rate: f64,
    pub subspaces: Vec<SubspaceRate>,
    pub certificate_passed: bool,
    pub warnings: Vec<String>,
    pub seed: u64,
    pub wallclock_ms: f64,
}

impl RateReport {
    /// Checks the report's internal consistency; returns the violated
    /// relations.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let tol = 1e-9;
        let log_d = (self.dim as f64).log2();
        if !(self.p_guess_ub > 0.0 && self.p_guess_ub <= 1.0 + tol) {
            out.push(format!("p_guess_ub = {} outside (0, 1]", self.p_guess_ub));
        }
        if (self.hmin_bits + self.p_guess_ub.log2()).abs() > tol {
            out.push("hmin_bits != -log2(p_guess_ub)".into());
        }
        if self.hmin_bits < -tol || self.hmin_bits > log_d + tol {
            out.push(format!("hmin_bits = {} outside [0, log2 d]", self.hmin_bits));
        }
        if (self.rate_bits - (self.hmin_bits - self.leak_bits)).abs() > tol {
            out.push("rate_bits != hmin_bits - leak_bits".into());
        }
        if self.clamped_rate < 0.0 || self.clamped_rate > log_d + tol {
            out.push(format!("clamped_rate = {} outside [0, log2 d]", self.clamped_rate));
        }
        if self.subspaces.is_empty() {
            if (self.clamped_rate - self.rate_bits.max(0.0)).abs() > tol {
                out.push("clamped_rate != max(rate_bits, 0)".into());
            }
        } else if self.clamped_rate < self.rate_bits.max(0.0) - tol {
            out.push("clamped_rate below max(rate_bits, 0)".into());
        }
        out
    }
}
