//! Witness observables, their presets, and the constraints they produce from
//! click data.
//!
//! The band witness acts only on `span{|k,k>}` where it is the symmetric
//! Toeplitz matrix `Q_kl = q_|k-l|`; the off-diagonal witness is
//! `p * sum_{i != j} |i,j><i,j|`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::completion::{self, Entry, PartialRealSymmetric};
use crate::error::{Error, Result};
use crate::measurement::ExtractedElements;
use crate::states::DensityMatrix;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDiagonalPairWitness {
    q: Vec<f64>,
}

impl BandDiagonalPairWitness {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.len() < 2 {
            return Err(Error::InvalidDimension(q.len()));
        }
        if let Some(&bad) = q.iter().find(|x| !x.is_finite()) {
            return Err(Error::domain("band coefficient", bad, "finite reals"));
        }
        Ok(BandDiagonalPairWitness { q })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// `q_0, ..., q_{d-1}`.
    pub fn coefficients(&self) -> &[f64] {
        &self.q
    }

    /// Upper bound on the operator norm: largest absolute row sum of `Q`.
    pub fn norm_bound(&self) -> f64 {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|k| self.q[i.abs_diff(k)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonalProjectorWitness {
    dim: usize,
    p: f64,
}

impl OffDiagonalProjectorWitness {
    pub fn new(dim: usize, p: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(dim));
        }
        if !p.is_finite() {
            return Err(Error::domain("p", p, "finite reals"));
        }
        Ok(OffDiagonalProjectorWitness { dim, p })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Arbitrary Hermitian observable on the two-party space.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericWitness {
    dim: usize,
    matrix: DMatrix<Complex64>,
}

impl GenericWitness {
    pub fn new(dim: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        let n = dim * dim;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows(),
            });
        }
        let defect = crate::spectra::hermitian_defect(&matrix);
        if defect > 1e-12 {
            return Err(Error::Symmetry(defect));
        }
        Ok(GenericWitness { dim, matrix })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Band(BandDiagonalPairWitness),
    OffDiagonal(OffDiagonalProjectorWitness),
    Generic(GenericWitness),
}

impl Witness {
    pub fn dim(&self) -> usize {
        match self {
            Witness::Band(w) => w.dim(),
            Witness::OffDiagonal(w) => w.dim(),
            Witness::Generic(w) => w.dim(),
        }
    }

    /// Dense `d^2 x d^2` matrix.
    pub fn dense(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        let n = d * d;
        match self {
            Witness::Band(w) => {
                let mut m = DMatrix::from_element(n, n, ZERO);
                for k in 0..d {
                    for l in 0..d {
                        m[(k * d + k, l * d + l)] = Complex64::new(w.q[k.abs_diff(l)], 0.0);
                    }
                }
                m
            }
            Witness::OffDiagonal(w) => {
                let mut m = DMatrix::from_element(n, n, ZERO);
                for i in 0..d {
                    for j in 0..d {
                        if i != j {
                            m[(i * d + j, i * d + j)] = Complex64::new(w.p, 0.0);
                        }
                    }
                }
                m
            }
            Witness::Generic(w) => w.matrix.clone(),
        }
    }

    /// Upper bound on the operator norm, so `|Tr[rho W]|` never exceeds it.
    pub fn norm_bound(&self) -> f64 {
        match self {
            Witness::Band(w) => w.norm_bound(),
            Witness::OffDiagonal(w) => w.p.abs(),
            Witness::Generic(w) => w.matrix.norm(),
        }
    }

    /// `Tr[rho W]`.
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<f64> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: rho.dim(),
            });
        }
        let d = self.dim();
        Ok(match self {
            Witness::Band(w) => {
                let mut total = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        total += w.q[k.abs_diff(l)] * rho.element((k, k), (l, l)).re;
                    }
                }
                total
            }
            Witness::OffDiagonal(w) => {
                let mut total = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        if i != j {
                            total += rho.element((i, j), (i, j)).re;
                        }
                    }
                }
                w.p * total
            }
            Witness::Generic(w) => {
                let m = rho.matrix();
                let n = d * d;
                let mut total = ZERO;
                for a in 0..n {
                    for b in 0..n {
                        total += m[(a, b)] * w.matrix[(b, a)];
                    }
                }
                total.re
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ConstraintKind {
    Equality(f64),
    Interval { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessConstraint {
    pub operator: Witness,
    pub kind: ConstraintKind,
}

impl WitnessConstraint {
    pub fn equality(operator: Witness, w: f64) -> Result<Self> {
        let bound = operator.norm_bound();
        if !w.is_finite() || w.abs() > bound * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::domain("witness expectation", w, "|w| <= ||W||"));
        }
        Ok(WitnessConstraint {
            operator,
            kind: ConstraintKind::Equality(w),
        })
    }

    /// Interval constraint; ends beyond `+-||W||` are pulled in to it since
    /// no state can reach past them.
    pub fn interval(operator: Witness, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::domain("interval lower end", lo, "lo <= hi"));
        }
        let bound = operator.norm_bound();
        let lo = lo.max(-bound);
        let hi = hi.min(bound);
        if lo > hi {
            return Err(Error::domain("witness interval", lo, "[-||W||, ||W||]"));
        }
        Ok(WitnessConstraint {
            operator,
            kind: ConstraintKind::Interval { lo, hi },
        })
    }

    /// True if `value` satisfies the constraint within `tol`.
    pub fn admits(&self, value: f64, tol: f64) -> bool {
        match self.kind {
            ConstraintKind::Equality(w) => (value - w).abs() <= tol,
            ConstraintKind::Interval { lo, hi } => value >= lo - tol && value <= hi + tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Kh1,
    Kh2,
    Khexp,
}

impl PresetName {
    pub fn label(&self) -> &'static str {
        match self {
            PresetName::Kh1 => "KH1",
            PresetName::Kh2 => "KH2",
            PresetName::Khexp => "KHexp",
        }
    }
}

impl std::str::FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kh1" => Ok(PresetName::Kh1),
            "kh2" => Ok(PresetName::Kh2),
            "khexp" => Ok(PresetName::Khexp),
            other => Err(Error::Config(format!("unknown witness preset {other:?}"))),
        }
    }
}

/// Witness selection: preset, exponential parameters, coefficient overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WitnessConfig {
    pub preset: PresetName,
    pub c: f64,
    pub s: f64,
    /// `q_0` for the exponential preset.
    pub q0: f64,
    /// Per-index replacements applied after the preset, e.g. `{1: 1.0}`.
    pub q_overrides: BTreeMap<usize, f64>,
    pub p: f64,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig {
            preset: PresetName::Khexp,
            c: 0.75,
            s: 4.0,
            q0: 0.0,
            q_overrides: BTreeMap::new(),
            p: 1.0,
        }
    }
}

impl WitnessConfig {
    pub fn preset(preset: PresetName) -> Self {
        WitnessConfig {
            preset,
            ..Default::default()
        }
    }

    pub fn with_override(mut self, z: usize, value: f64) -> Self {
        self.q_overrides.insert(z, value);
        self
    }

    /// Short label, e.g. `KH1[q1=1]` or `KHexp(c=0.75,s=4)`.
    pub fn label(&self) -> String {
        let mut label = self.preset.label().to_string();
        if self.preset == PresetName::Khexp {
            label.push_str(&format!("(c={},s={})", self.c, self.s));
        }
        if !self.q_overrides.is_empty() {
            let parts: Vec<String> = self
                .q_overrides
                .iter()
                .map(|(z, v)| format!("q{z}={v}"))
                .collect();
            label.push_str(&format!("[{}]", parts.join(";")));
        }
        label
    }

    /// Witness pair for local dimension `d`, with any warnings.
    pub fn build(
        &self,
        d: usize,
    ) -> Result<(BandDiagonalPairWitness, OffDiagonalProjectorWitness, Vec<String>)> {
        let mut warnings = Vec::new();
        let mut q = match self.preset {
            PresetName::Kh1 => {
                if !self.q_overrides.contains_key(&1) {
                    warnings.push(
                        "KH1 leaves q1 unspecified; using q1 = 0 (override with q_overrides {1: ...})"
                            .to_string(),
                    );
                }
                kh1_coefficients(d)?
            }
            PresetName::Kh2 => kh2_coefficients(d)?,
            PresetName::Khexp => khexp_coefficients(d, self.c, self.s, self.q0)?,
        };
        for (&z, &value) in &self.q_overrides {
            if z >= d {
                return Err(Error::Config(format!("override index q{z} outside 0..{d}")));
            }
            q[z] = value;
        }
        Ok((
            BandDiagonalPairWitness::new(q)?,
            OffDiagonalProjectorWitness::new(d, self.p)?,
            warnings,
        ))
    }
}

fn require_sixteen(preset: &'static str, d: usize) -> Result<()> {
    if d != 16 {
        return Err(Error::PresetDimension {
            preset,
            expected: 16,
            found: d,
        });
    }
    Ok(())
}

/// `q_0 = -1, q_2 = 1, q_3 = 2.7, q_4 = 0.47`, rest (including `q_1`) zero.
pub fn kh1_coefficients(d: usize) -> Result<Vec<f64>> {
    require_sixteen("KH1", d)?;
    let mut q = vec![0.0; d];
    q[0] = -1.0;
    q[2] = 1.0;
    q[3] = 2.7;
    q[4] = 0.47;
    Ok(q)
}

/// `q_0 = 0`, `q_1 = ... = q_11 = 1`, `q_12 = ... = q_15 = 0`.
pub fn kh2_coefficients(d: usize) -> Result<Vec<f64>> {
    require_sixteen("KH2", d)?;
    Ok((0..d).map(|z| if (1..=11).contains(&z) { 1.0 } else { 0.0 }).collect())
}

/// `q_z = exp(-c (z - s))` for `z >= 1`, with the given `q_0`.
pub fn khexp_coefficients(d: usize, c: f64, s: f64, q0: f64) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    Ok((0..d)
        .map(|z| if z == 0 { q0 } else { (-c * (z as f64 - s)).exp() })
        .collect())
}

pub fn kh1_preset(
    d: usize,
    q1: Option<f64>,
) -> Result<(BandDiagonalPairWitness, OffDiagonalProjectorWitness)> {
    let mut cfg = WitnessConfig::preset(PresetName::Kh1);
    if let Some(q1) = q1 {
        cfg = cfg.with_override(1, q1);
    }
    cfg.build(d).map(|(a, b, _)| (a, b))
}

pub fn kh2_preset(d: usize) -> Result<(BandDiagonalPairWitness, OffDiagonalProjectorWitness)> {
    WitnessConfig::preset(PresetName::Kh2)
        .build(d)
        .map(|(a, b, _)| (a, b))
}

pub fn khexp_preset(
    d: usize,
    c: f64,
    s: f64,
) -> Result<(BandDiagonalPairWitness, OffDiagonalProjectorWitness)> {
    WitnessConfig {
        c,
        s,
        ..Default::default()
    }
    .build(d)
    .map(|(a, b, _)| (a, b))
}

/// `w_2 = p * sum_{i != j} TT(i, j)`, known with equality.
pub fn expectation_w2(tt: &DMatrix<f64>, witness: &OffDiagonalProjectorWitness) -> Result<WitnessConstraint> {
    let d = tt.nrows();
    if d != witness.dim() {
        return Err(Error::DimensionMismatch {
            expected: witness.dim(),
            found: d,
        });
    }
    let off: f64 = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| tt[(i, j)])
        .sum();
    WitnessConstraint::equality(Witness::OffDiagonal(witness.clone()), witness.p * off)
}

/// Completion input for the correlated-bin sector `r_kl = Re <k,k|rho|l,l>`:
/// diagonal from `TT(k, k)`, first band from the extracted `(i, i)` real
/// parts (or the x-only interval when only a lower bound is available).
pub fn correlated_sector(extracted: &ExtractedElements, warnings: &mut Vec<String>) -> Result<PartialRealSymmetric> {
    let d = extracted.dim;
    let diag: Vec<f64> = (0..d).map(|k| extracted.diag[k][k].max(0.0)).collect();
    let mut r = PartialRealSymmetric::from_diagonal(&diag)?;
    for i in 1..d {
        let limit = (diag[i] * diag[i - 1]).sqrt();
        if let Some(&value) = extracted.re_nn.get(&(i, i)) {
            let clamped = value.clamp(-limit, limit);
            if (clamped - value).abs() > completion::CAUCHY_SCHWARZ_TOL {
                warnings.push(format!(
                    "Re<{i},{i}|rho|{},{}> = {value} exceeds sqrt(TT TT) = {limit}; clamped",
                    i - 1,
                    i - 1
                ));
            }
            r.set_known(i - 1, i, clamped)?;
        } else if let Some(&lower) = extracted.lower_bounds.get(&(i, i)) {
            r.set_interval(i - 1, i, lower.clamp(-limit, limit), limit)?;
        }
    }
    Ok(r)
}

/// Interval for `w_1 = Tr[rho W_1]` from the diagonal and the completed
/// correlated-bin sector. Entries the completion could not reach fall back
/// to `|r_kl| <= sqrt(r_kk r_ll)`.
pub fn expectation_interval_w1(
    witness: &BandDiagonalPairWitness,
    completed: &PartialRealSymmetric,
) -> Result<WitnessConstraint> {
    let d = witness.dim();
    if completed.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: completed.dim(),
        });
    }
    let q = witness.coefficients();
    let diag_sum: f64 = (0..d).map(|k| completed.diag(k)).sum();
    let mut lo = q[0] * diag_sum;
    let mut hi = lo;
    for z in 1..d {
        if q[z] == 0.0 {
            continue;
        }
        for i in 0..d - z {
            let (elo, ehi) = match completed.get(i, i + z) {
                Entry::Unknown => {
                    let lim = (completed.diag(i) * completed.diag(i + z)).sqrt();
                    (-lim, lim)
                }
                e => e.bounds().expect("known or interval"),
            };
            let (a, b) = (2.0 * q[z] * elo, 2.0 * q[z] * ehi);
            lo += a.min(b);
            hi += a.max(b);
        }
    }
    WitnessConstraint::interval(Witness::Band(witness.clone()), lo, hi)
}

/// The band-witness interval and off-diagonal equality constraints for a
/// set of extracted elements.
pub fn pair_constraints(
    band: &BandDiagonalPairWitness,
    off: &OffDiagonalProjectorWitness,
    tt: &DMatrix<f64>,
    extracted: &ExtractedElements,
    completion_passes: usize,
    warnings: &mut Vec<String>,
) -> Result<Vec<WitnessConstraint>> {
    let sector = correlated_sector(extracted, warnings)?;
    let (completed, report) = completion::complete(&sector, completion_passes)?;
    if !report.converged {
        warnings.push(format!(
            "completion stopped after {} passes without reaching a fixpoint",
            report.passes
        ));
    }
    Ok(vec![
        expectation_interval_w1(band, &completed)?,
        expectation_w2(tt, off)?,
    ])
}
