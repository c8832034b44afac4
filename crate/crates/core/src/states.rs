//! Bipartite qudit states on the temporal space `C^d (x) C^d`.
//!
//! Basis pairs `|i,j>` map to the flat index `i * d + j` (Alice's bin is the
//! major index).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra;

pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Weights below this cannot be renormalized.
pub const MIN_SUBSPACE_WEIGHT: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Hermitian, PSD, unit-trace matrix on the `d^2`-dimensional two-party
/// temporal space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    entries: DMatrix<Complex64>,
    real: bool,
}

impl DensityMatrix {
    /// Wraps `entries` after checking the state invariants. The stored
    /// matrix is the exact Hermitian part of the input.
    pub fn from_matrix(dim: usize, entries: DMatrix<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        let n = dim * dim;
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: entries.nrows().max(entries.ncols()),
            });
        }
        let diag = validate_matrix(&entries);
        if !diag.passed {
            return Err(Error::Data(format!("not a density matrix: {diag}")));
        }
        Ok(Self::from_parts(dim, hermitian_part(&entries)))
    }

    pub(crate) fn from_parts(dim: usize, entries: DMatrix<Complex64>) -> Self {
        let real = entries.iter().all(|z| z.im == 0.0);
        DensityMatrix { dim, entries, real }
    }

    pub fn from_real(dim: usize, entries: DMatrix<f64>) -> Result<Self> {
        Self::from_matrix(dim, entries.map(|x| Complex64::new(x, 0.0)))
    }

    /// Local dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// True when every entry has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.real
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.dim + j
    }

    /// `<i,j| rho |k,l>`.
    #[inline]
    pub fn element(&self, (i, j): (usize, usize), (k, l): (usize, usize)) -> Complex64 {
        self.entries[(self.index(i, j), self.index(k, l))]
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        // Tr[rho^2] = sum |rho_ab|^2 for Hermitian rho
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn validate(&self) -> Diagnostics {
        validate_matrix(&self.entries)
    }

    /// `Re <k,k| rho |l,l>`: the real part of the correlated-bin sector.
    pub fn correlated_sector_real(&self) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |k, l| self.element((k, k), (l, l)).re)
    }
}

fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |a, b| {
        if a == b {
            Complex64::new(m[(a, a)].re, 0.0)
        } else {
            (m[(a, b)] + m[(b, a)].conj()) * 0.5
        }
    })
}

/// The pure state `(1/sqrt d) sum_k |k,k>`.
pub fn max_entangled(d: usize) -> Result<DensityMatrix> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let n = d * d;
    let amp = 1.0 / d as f64;
    let mut m = DMatrix::from_element(n, n, ZERO);
    for k in 0..d {
        for l in 0..d {
            m[(k * d + k, l * d + l)] = Complex64::new(amp, 0.0);
        }
    }
    Ok(DensityMatrix::from_parts(d, m))
}

/// `v |Psi><Psi| + (1 - v)/d^2 * 1`.
pub fn isotropic(d: usize, v: f64) -> Result<DensityMatrix> {
    NoiseModelSpec::new(d, v)?.state()
}

/// Visibility and dimension of the isotropic noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModelSpec {
    pub dim: usize,
    pub visibility: f64,
}

impl NoiseModelSpec {
    pub fn new(dim: usize, visibility: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(dim));
        }
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::domain("visibility", visibility, "[0, 1]"));
        }
        Ok(NoiseModelSpec { dim, visibility })
    }

    /// `<i,j| rho |k,l>` in closed form.
    pub fn element(&self, (i, j): (usize, usize), (k, l): (usize, usize)) -> Complex64 {
        let d = self.dim as f64;
        let mut x = 0.0;
        if i == j && k == l {
            x += self.visibility / d;
        }
        if i == k && j == l {
            x += (1.0 - self.visibility) / (d * d);
        }
        Complex64::new(x, 0.0)
    }

    pub fn state(&self) -> Result<DensityMatrix> {
        let d = self.dim;
        let v = self.visibility;
        let pure = max_entangled(d)?;
        let noise = (1.0 - v) / (d * d) as f64;
        let mut m = pure.entries.map(|z| z * v);
        for a in 0..d * d {
            m[(a, a)] += noise;
        }
        Ok(DensityMatrix::from_parts(d, m))
    }
}

/// Disjoint index blocks of equal size covering `0..dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspacePartition {
    dim: usize,
    block_size: usize,
    blocks: Vec<Vec<usize>>,
}

impl SubspacePartition {
    /// Contiguous blocks `{0..D}, {D..2D}, ...`.
    pub fn contiguous(dim: usize, block_size: usize) -> Result<Self> {
        if block_size == 0 || !dim.is_multiple_of(block_size) {
            return Err(Error::Config(format!(
                "block size {block_size} does not divide d = {dim}"
            )));
        }
        let blocks = (0..dim / block_size)
            .map(|m| (m * block_size..(m + 1) * block_size).collect())
            .collect();
        Ok(SubspacePartition {
            dim,
            block_size,
            blocks,
        })
    }

    pub fn from_blocks(dim: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let block_size = blocks.first().map_or(0, Vec::len);
        if block_size == 0 {
            return Err(Error::Config("empty subspace partition".into()));
        }
        let mut seen = vec![false; dim];
        for b in &mut blocks {
            if b.len() != block_size {
                return Err(Error::Config("subspace blocks differ in size".into()));
            }
            b.sort_unstable();
            for &i in b.iter() {
                if i >= dim || seen[i] {
                    return Err(Error::Config(format!(
                        "index {i} is out of range or repeated in the partition"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("partition does not cover every bin".into()));
        }
        Ok(SubspacePartition {
            dim,
            block_size,
            blocks,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Probability that both parties land in `block`, and the state conditioned
/// on that event, re-indexed to local dimension `|block|`.
pub fn project_subspace(rho: &DensityMatrix, block: &[usize]) -> Result<(f64, DensityMatrix)> {
    let d = rho.dim();
    if block.is_empty() {
        return Err(Error::Index("empty subspace".into()));
    }
    if let Some(&bad) = block.iter().find(|&&i| i >= d) {
        return Err(Error::Index(format!("bin {bad} outside 0..{d}")));
    }
    let dd = block.len();
    let flat: Vec<usize> = block
        .iter()
        .flat_map(|&i| block.iter().map(move |&j| i * d + j))
        .collect();
    let weight: f64 = flat.iter().map(|&a| rho.entries[(a, a)].re).sum();
    if weight < MIN_SUBSPACE_WEIGHT {
        return Err(Error::EmptySubspace(weight));
    }
    let m = DMatrix::from_fn(dd * dd, dd * dd, |a, b| {
        rho.entries[(flat[a], flat[b])] / weight
    });
    Ok((weight, DensityMatrix::from_parts(dd, m)))
}

/// Invariant check report for a candidate density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub hermitian_defect: f64,
    pub trace_defect: f64,
    pub min_eigenvalue: f64,
    pub hermitian_ok: bool,
    pub trace_ok: bool,
    pub psd_ok: bool,
    pub passed: bool,
}

impl std::fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "hermitian defect {:.3e}, trace defect {:.3e}, min eigenvalue {:.3e}",
            self.hermitian_defect, self.trace_defect, self.min_eigenvalue
        )
    }
}

pub fn validate_matrix(m: &DMatrix<Complex64>) -> Diagnostics {
    let hermitian_defect = spectra::hermitian_defect(m);
    let trace: f64 = m.diagonal().iter().map(|z| z.re).sum();
    let trace_defect = (trace - 1.0).abs();
    let min_eigenvalue = spectra::hermitian_eigenvalues(&hermitian_part(m))
        .map(|v| v[0])
        .unwrap_or(f64::NAN);
    let hermitian_ok = hermitian_defect <= HERMITIAN_TOL;
    let trace_ok = trace_defect <= TRACE_TOL;
    let psd_ok = min_eigenvalue >= -PSD_TOL;
    Diagnostics {
        hermitian_defect,
        trace_defect,
        min_eigenvalue,
        hermitian_ok,
        trace_ok,
        psd_ok,
        passed: hermitian_ok && trace_ok && psd_ok,
    }
}

/// Random state `G G^dag / Tr[G G^dag]` with Gaussian `G` of full rank.
/// With `real` set, `G` is real.
pub fn random_state<R: Rng + ?Sized>(d: usize, real: bool, rng: &mut R) -> DensityMatrix {
    let n = d * d;
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if real { 0.0 } else { rng.sample(StandardNormal) };
        Complex64::new(re, im)
    });
    let m = &g * g.adjoint();
    let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
    DensityMatrix::from_parts(d, hermitian_part(&m.unscale(tr)))
}
