//! Interval completion of a partially known real symmetric PSD matrix.
//!
//! Nonnegativity of the 3x3 principal minor on indices `(j, k, l)` is a
//! downward parabola in `r_jl`, so it confines `r_jl` to
//!
//! ```text
//! [ (r_jk r_kl - R) / r_kk , (r_jk r_kl + R) / r_kk ],
//! R = sqrt((r_jj r_kk - r_jk^2) (r_kk r_ll - r_kl^2))
//! ```
//!
//! Writing `r_jk = sqrt(r_jj r_kk) cos(a)` and `r_kl = sqrt(r_kk r_ll) cos(b)`
//! turns the interval into `sqrt(r_jj r_ll) [cos(a + b), cos(a - b)]`, which
//! gives exact envelopes when `r_jk`, `r_kl` are themselves intervals.

use serde::Serialize;

use crate::error::{Error, Result};

/// Pivots `r_kk` at or below this are skipped.
pub const PIVOT_TOL: f64 = 1e-14;
/// Passes stop once no interval endpoint moves by more than this.
pub const SHRINK_TOL: f64 = 1e-12;
/// Slack allowed on `|r_jl| <= sqrt(r_jj r_ll)` for known entries.
pub const CAUCHY_SCHWARZ_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Entry {
    Known(f64),
    Interval { lo: f64, hi: f64 },
    Unknown,
}

impl Entry {
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Entry::Known(x) => Some((x, x)),
            Entry::Interval { lo, hi } => Some((lo, hi)),
            Entry::Unknown => None,
        }
    }

    pub fn width(&self) -> f64 {
        match *self {
            Entry::Known(_) => 0.0,
            Entry::Interval { lo, hi } => hi - lo,
            Entry::Unknown => f64::INFINITY,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Entry::Known(_) => "known",
            Entry::Interval { .. } => "interval",
            Entry::Unknown => "unknown",
        }
    }
}

/// Real part of a density matrix with per-entry knowledge. Diagonal
/// entries are always known; `(j, l)` and `(l, j)` share storage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialRealSymmetric {
    n: usize,
    entries: Vec<Entry>,
}

impl PartialRealSymmetric {
    /// Known diagonal, everything else unknown.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        if let Some(&bad) = diag.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::domain("diagonal entry", bad, "[0, inf)"));
        }
        let mut entries = vec![Entry::Unknown; n * n];
        for (i, &x) in diag.iter().enumerate() {
            entries[i * n + i] = Entry::Known(x);
        }
        Ok(PartialRealSymmetric { n, entries })
    }

    /// Every entry known.
    pub fn from_dense(m: &nalgebra::DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        let diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
        let mut r = Self::from_diagonal(&diag)?;
        for j in 0..n {
            for l in (j + 1)..n {
                r.set_known(j, l, 0.5 * (m[(j, l)] + m[(l, j)]))?;
            }
        }
        Ok(r)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, l: usize) -> Entry {
        self.entries[j * self.n + l]
    }

    pub fn diag(&self, j: usize) -> f64 {
        match self.get(j, j) {
            Entry::Known(x) => x,
            _ => unreachable!("diagonal entries are always known"),
        }
    }

    fn put(&mut self, j: usize, l: usize, e: Entry) {
        self.entries[j * self.n + l] = e;
        self.entries[l * self.n + j] = e;
    }

    fn check_offdiag(&self, j: usize, l: usize) -> Result<()> {
        if j >= self.n || l >= self.n || j == l {
            return Err(Error::Index(format!("({j}, {l}) is not an off-diagonal entry")));
        }
        Ok(())
    }

    pub fn set_known(&mut self, j: usize, l: usize, value: f64) -> Result<()> {
        self.check_offdiag(j, l)?;
        let limit = (self.diag(j) * self.diag(l)).sqrt();
        if !value.is_finite() || value.abs() > limit + CAUCHY_SCHWARZ_TOL {
            return Err(Error::domain("off-diagonal entry", value, "|r_jl| <= sqrt(r_jj r_ll)"));
        }
        self.put(j, l, Entry::Known(value));
        Ok(())
    }

    pub fn set_interval(&mut self, j: usize, l: usize, lo: f64, hi: f64) -> Result<()> {
        self.check_offdiag(j, l)?;
        if !(lo <= hi) {
            return Err(Error::domain("interval lower end", lo, "lo <= hi"));
        }
        self.put(j, l, Entry::Interval { lo, hi });
        Ok(())
    }

    /// Sum of interval widths over the upper triangle (unknowns count as
    /// infinite).
    pub fn total_width(&self) -> f64 {
        (0..self.n)
            .flat_map(|j| ((j + 1)..self.n).map(move |l| (j, l)))
            .map(|(j, l)| self.get(j, l).width())
            .sum()
    }

    pub fn unknown_count(&self) -> usize {
        (0..self.n)
            .flat_map(|j| ((j + 1)..self.n).map(move |l| (j, l)))
            .filter(|&(j, l)| self.get(j, l) == Entry::Unknown)
            .count()
    }
}

/// Normalized correlation `x / scale` clamped to `[-1, 1]`, or an error if
/// it is outside by more than roundoff.
fn correlation(x: f64, scale: f64, triple: (usize, usize, usize)) -> Result<f64> {
    let c = x / scale;
    if c.abs() > 1.0 + 1e-9 {
        let (j, k, l) = triple;
        return Err(Error::Inconsistent { j, k, l });
    }
    Ok(c.clamp(-1.0, 1.0))
}

/// Interval for `r_jl` implied by the minor on `(j, k, l)`.
pub fn minor_bounds(r: &PartialRealSymmetric, j: usize, k: usize, l: usize) -> Result<(f64, f64)> {
    let n = r.dim();
    if j >= n || k >= n || l >= n || j == k || k == l || j == l {
        return Err(Error::Index(format!("triple ({j}, {k}, {l}) is not distinct and in range")));
    }
    let (rjj, rkk, rll) = (r.diag(j), r.diag(k), r.diag(l));
    if rkk <= PIVOT_TOL {
        return Err(Error::PivotDegenerate(k));
    }
    let (a_lo, a_hi) = r
        .get(j, k)
        .bounds()
        .ok_or_else(|| Error::Index(format!("entry ({j}, {k}) is unknown")))?;
    let (b_lo, b_hi) = r
        .get(k, l)
        .bounds()
        .ok_or_else(|| Error::Index(format!("entry ({k}, {l}) is unknown")))?;
    let outer = (rjj * rll).sqrt();
    if outer == 0.0 {
        return Ok((0.0, 0.0));
    }
    let sa = (rjj * rkk).sqrt();
    let sb = (rkk * rll).sqrt();
    let t = (j, k, l);
    let (ca_lo, ca_hi) = (correlation(a_lo, sa, t)?, correlation(a_hi, sa, t)?);
    let (cb_lo, cb_hi) = (correlation(b_lo, sb, t)?, correlation(b_hi, sb, t)?);

    // cos(a -/+ b) for correlations ca = cos a, cb = cos b, with a, b in [0, pi]
    let sin = |c: f64| (1.0 - c * c).max(0.0).sqrt();
    let lower_at = |ca: f64, cb: f64| ca * cb - sin(ca) * sin(cb);
    let upper_at = |ca: f64, cb: f64| ca * cb + sin(ca) * sin(cb);

    // a + b ranges over [acos ca_hi + acos cb_hi, acos ca_lo + acos cb_lo];
    // acos x + acos y <= pi  <=>  x + y >= 0
    let lo = if ca_hi + cb_hi >= 0.0 && ca_lo + cb_lo <= 0.0 {
        -1.0
    } else {
        lower_at(ca_hi, cb_hi).min(lower_at(ca_lo, cb_lo))
    };
    // a - b ranges over [acos ca_hi - acos cb_lo, acos ca_lo - acos cb_hi]
    let hi = if ca_hi >= cb_lo && ca_lo <= cb_hi {
        1.0
    } else {
        upper_at(ca_hi, cb_lo).max(upper_at(ca_lo, cb_hi))
    };
    Ok((outer * lo.max(-1.0), outer * hi.min(1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompletionReport {
    pub passes: usize,
    pub converged: bool,
}

/// Iterates [`minor_bounds`] over all triples to a fixpoint.
///
/// Each pass derives bounds from the previous pass's table only; pivots `k`
/// sweep in increasing order for each target `(j, l)`, targets in
/// lexicographic order. Every target interval is intersected with all derived
/// intervals, so intervals never widen.
pub fn complete(
    input: &PartialRealSymmetric,
    max_passes: usize,
) -> Result<(PartialRealSymmetric, CompletionReport)> {
    if max_passes == 0 {
        return Err(Error::Config("max_passes must be at least 1".into()));
    }
    let n = input.dim();
    let mut current = input.clone();
    for pass in 1..=max_passes {
        let mut next = current.clone();
        let mut moved = false;
        for j in 0..n {
            for l in (j + 1)..n {
                if let Entry::Known(_) = current.get(j, l) {
                    continue;
                }
                let mut bounds = current.get(j, l).bounds();
                for k in 0..n {
                    if k == j || k == l || current.diag(k) <= PIVOT_TOL {
                        continue;
                    }
                    if current.get(j, k) == Entry::Unknown || current.get(k, l) == Entry::Unknown {
                        continue;
                    }
                    let (lo, hi) = minor_bounds(&current, j, k, l)?;
                    let (lo, hi) = match bounds {
                        None => (lo, hi),
                        Some((plo, phi)) => (plo.max(lo), phi.min(hi)),
                    };
                    if lo > hi + SHRINK_TOL {
                        return Err(Error::Inconsistent { j, k, l });
                    }
                    bounds = Some(if lo > hi {
                        let mid = 0.5 * (lo + hi);
                        (mid, mid)
                    } else {
                        (lo, hi)
                    });
                }
                if let Some((lo, hi)) = bounds {
                    let changed = match current.get(j, l) {
                        Entry::Interval { lo: plo, hi: phi } => {
                            lo - plo > SHRINK_TOL || phi - hi > SHRINK_TOL
                        }
                        _ => true,
                    };
                    moved |= changed;
                    next.put(j, l, Entry::Interval { lo, hi });
                }
            }
        }
        current = next;
        if !moved {
            return Ok((
                current,
                CompletionReport {
                    passes: pass,
                    converged: true,
                },
            ));
        }
    }
    Ok((
        current,
        CompletionReport {
            passes: max_passes,
            converged: false,
        },
    ))
}
