//! Largest-eigenvalue computations.
//!
//! Dense matrices go through a cyclic Jacobi eigensolver; complex Hermitian
//! input is handled by the real embedding `[[A, -B], [B, A]]` of `A + iB`,
//! which has the same spectrum with every eigenvalue doubled in multiplicity.
//!
//! For the band/off-diagonal witness pair the eigenproblem of `M_l` splits
//! into a `d x d` block on `span{|k,k>}` and a diagonal remainder, see
//! [`lambda_max_blocked`]. [`BandSpectrum`] solves the `d x d` block as a
//! rank-one update of a fixed spectral decomposition, which is what the
//! optimizer calls in its inner loop.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative off-diagonal Frobenius mass at which Jacobi sweeps stop.
pub const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Tolerance on `|m_ij - conj(m_ji)|` (relative to `max(1, max|m_ij|)`) for
/// accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub lambda: f64,
    /// Unit-norm eigenvector for `lambda`.
    pub vector: DVector<Complex64>,
    /// `||M v - lambda v||_2`.
    pub residual: f64,
}

/// Eigen-decomposition of a real symmetric matrix; eigenvalues ascending,
/// eigenvectors stored as columns in the same order.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn max(&self) -> f64 {
        *self.values.last().expect("empty spectrum")
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// Applies `f` to the spectrum: `V f(L) V^T`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut out = DMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let fl = f(lam);
            if fl == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            for j in 0..n {
                let vj = v[j] * fl;
                if vj == 0.0 {
                    continue;
                }
                for i in 0..n {
                    out[(i, j)] += v[i] * vj;
                }
            }
        }
        out
    }
}

/// Cyclic Jacobi eigensolver for real symmetric matrices.
///
/// Only the upper triangle of `a` is read. Sweeps run over all pairs
/// `p < q` in row order until the off-diagonal Frobenius mass drops below
/// `JACOBI_TOL * ||A||_F`.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> SymmetricEigen {
    jacobi(a, true)
}

/// Eigenvalues only, ascending; same sweeps as [`symmetric_eigen`] without
/// accumulating the rotations.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    jacobi(a, false).values
}

fn jacobi(a: &DMatrix<f64>, want_vectors: bool) -> SymmetricEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    if n == 0 {
        return SymmetricEigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        };
    }
    // dense row-major work copy, symmetrized from the upper triangle
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let x = a[(i, j)];
            m[i * n + j] = x;
            m[j * n + i] = x;
        }
    }
    // eigenvectors, row-major: v[i*n + k] is component i of vector k
    let mut v = vec![0.0; if want_vectors { n * n } else { 0 }];
    if want_vectors {
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
    }

    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = JACOBI_TOL * frob;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * m[p * n + q] * m[p * n + q];
            }
        }
        if off.sqrt() <= target || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = m[r * n + p];
                    let arq = m[r * n + q];
                    let nrp = arp - s * (arq + tau * arp);
                    let nrq = arq + s * (arp - tau * arq);
                    m[r * n + p] = nrp;
                    m[p * n + r] = nrp;
                    m[r * n + q] = nrq;
                    m[q * n + r] = nrq;
                }
                for r in 0..if want_vectors { n } else { 0 } {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = vrp - s * (vrq + tau * vrp);
                    v[r * n + q] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[x * n + x].total_cmp(&m[y * n + y]));
    let values = order.iter().map(|&k| m[k * n + k]).collect();
    let vectors = if want_vectors {
        DMatrix::from_fn(n, n, |i, col| v[i * n + order[col]])
    } else {
        DMatrix::zeros(0, 0)
    };
    SymmetricEigen { values, vectors }
}

/// Largest absolute Hermiticity defect `max |m_ij - conj(m_ji)|`.
pub fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_hermitian(m: &DMatrix<Complex64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let scale = m.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL * scale {
        return Err(Error::Symmetry(defect));
    }
    Ok(())
}

fn is_real(m: &DMatrix<Complex64>) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

/// `[[Re H, -Im H], [Im H, Re H]]`, symmetrized.
pub fn real_embedding(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = h.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, ii) = (i / n, i % n);
        let (bj, jj) = (j / n, j % n);
        let z = (h[(ii, jj)] + h[(jj, ii)].conj()) * 0.5;
        match (bi, bj) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    })
}

/// Hermitian eigenvalues (ascending, each listed once) via the real embedding
/// or the real fast path.
pub fn hermitian_eigenvalues(h: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    check_hermitian(h)?;
    if is_real(h) {
        Ok(symmetric_eigenvalues(&h.map(|z| z.re)))
    } else {
        let values = symmetric_eigenvalues(&real_embedding(h));
        // the embedded spectrum lists each eigenvalue twice
        Ok(values.iter().step_by(2).copied().collect())
    }
}

/// Applies a real function to a Hermitian matrix through its spectrum.
pub fn hermitian_map(h: &DMatrix<Complex64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<Complex64>> {
    check_hermitian(h)?;
    let n = h.nrows();
    if is_real(h) {
        let out = symmetric_eigen(&h.map(|z| z.re)).map(f);
        return Ok(out.map(|x| Complex64::new(x, 0.0)));
    }
    // f(embed(H)) = embed(f(H)), so the blocks of the mapped embedding give f(H)
    let big = symmetric_eigen(&real_embedding(h)).map(f);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(
            0.5 * (big[(i, j)] + big[(n + i, n + j)]),
            0.5 * (big[(n + i, j)] - big[(i, n + j)]),
        )
    }))
}

/// Square root of a PSD matrix; negative eigenvalues from roundoff are
/// clamped at zero first.
pub fn psd_sqrt(h: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    hermitian_map(h, |x| x.max(0.0).sqrt())
}

/// Inverse square root of a positive definite matrix.
pub fn inverse_sqrt(h: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let vals = hermitian_eigenvalues(h)?;
    if vals[0] <= 0.0 {
        return Err(Error::domain("smallest eigenvalue", vals[0], "(0, inf)"));
    }
    hermitian_map(h, |x| 1.0 / x.sqrt())
}

/// Largest eigenvalue of a dense Hermitian matrix with its eigenvector and
/// residual.
pub fn lambda_max_dense(m: &DMatrix<Complex64>) -> Result<SpectralResult> {
    check_hermitian(m)?;
    let n = m.nrows();
    if n == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let (lambda, vector) = if is_real(m) {
        let eig = symmetric_eigen(&m.map(|z| z.re));
        let col = eig.vectors.column(n - 1);
        let v = DVector::from_fn(n, |i, _| Complex64::new(col[i], 0.0));
        (eig.max(), v)
    } else {
        let eig = symmetric_eigen(&real_embedding(m));
        let col = eig.vectors.column(2 * n - 1);
        let v = DVector::from_fn(n, |i, _| Complex64::new(col[i], col[n + i]));
        (eig.max(), v)
    };
    let norm = vector.norm();
    let vector = vector.unscale(norm);
    let residual = (m * &vector - vector.scale(lambda)).norm();
    Ok(SpectralResult {
        lambda,
        vector,
        residual,
    })
}

/// Largest eigenvalue of a real symmetric matrix.
pub fn lambda_max_symmetric(a: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(a).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// `Q_ij = q_|i-j|`, the restriction of the band witness to `span{|k,k>}`.
pub fn band_toeplitz(q: &[f64]) -> DMatrix<f64> {
    let d = q.len();
    DMatrix::from_fn(d, d, |i, j| q[i.abs_diff(j)])
}

/// `max(lambda_max(Delta_l - y1 Q), 1 - tau p, -tau p)`: the largest
/// eigenvalue of `M_l` for the band/off-diagonal witness pair with net
/// multipliers `y1` (band) and `tau` (off-diagonal), computed by a direct
/// Jacobi solve of the `d x d` block.
pub fn lambda_max_blocked(ell: usize, q: &[f64], p: f64, y1: f64, tau: f64) -> f64 {
    let d = q.len();
    assert!(ell < d, "block index out of range");
    let mut block = band_toeplitz(q).scale(-y1);
    block[(ell, ell)] += 1.0;
    lambda_max_symmetric(&block).max(1.0 - tau * p).max(-tau * p)
}

/// Spectral data of the band matrix `Q`, reused across many multiplier
/// values: `lambda_max(Delta_l - y1 Q)` is the top root of the secular
/// equation of the rank-one update `-y1 Q + e_l e_l^T`.
#[derive(Debug, Clone)]
pub struct BandSpectrum {
    /// Eigenvalues of `Q`, ascending.
    values: Vec<f64>,
    /// `weights[l][i] = (v_i)_l^2`, the squared overlap of `e_l` with the
    /// i-th eigenvector.
    weights: Vec<Vec<f64>>,
}

impl BandSpectrum {
    pub fn new(q: &[f64]) -> Self {
        let eig = symmetric_eigen(&band_toeplitz(q));
        let d = q.len();
        let weights = (0..d)
            .map(|l| (0..d).map(|i| eig.vectors[(l, i)].powi(2)).collect())
            .collect();
        BandSpectrum {
            values: eig.values,
            weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `lambda_max(Delta_l - y1 Q)`.
    pub fn lambda_max(&self, ell: usize, y1: f64) -> f64 {
        let w = &self.weights[ell];
        let shifted = |i: usize| -y1 * self.values[i];
        let top_all = if y1 >= 0.0 {
            shifted(0)
        } else {
            shifted(self.values.len() - 1)
        };
        // eigen-directions with negligible overlap keep their eigenvalue
        let active: Vec<(f64, f64)> = (0..self.values.len())
            .filter(|&i| w[i] > 1e-30)
            .map(|i| (shifted(i), w[i]))
            .collect();
        let top = active.iter().map(|&(di, _)| di).fold(f64::NEG_INFINITY, f64::max);
        let top_weight: f64 = active
            .iter()
            .filter(|&&(di, _)| di == top)
            .map(|&(_, wi)| wi)
            .sum();
        // g(mu) = sum w_i / (mu + top - d_i) = 1 has its root in [top_weight, 1]
        let g = |mu: f64| -> (f64, f64) {
            let mut val = 0.0;
            let mut der = 0.0;
            for &(di, wi) in &active {
                let den = mu + (top - di);
                val += wi / den;
                der -= wi / (den * den);
            }
            (val, der)
        };
        let mut lo = top_weight.min(1.0);
        let mut hi = 1.0_f64.max(lo);
        let mut mu = lo;
        for _ in 0..200 {
            let (val, der) = g(mu);
            let phi = val - 1.0;
            if phi > 0.0 {
                lo = mu;
            } else {
                hi = mu;
            }
            if phi == 0.0 {
                break;
            }
            let mut next = mu - phi / der;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - mu).abs() <= 1e-16 * next.abs().max(1e-300) || hi - lo <= 1e-16 * hi {
                mu = next;
                break;
            }
            mu = next;
        }
        (top + mu).max(top_all)
    }

    /// `max_l lambda_max(M_l)` and the per-l values for the witness pair.
    pub fn lambda_max_all(&self, p: f64, y1: f64, tau: f64) -> Vec<f64> {
        let scalar = (1.0 - tau * p).max(-tau * p);
        (0..self.dim())
            .map(|l| self.lambda_max(l, y1).max(scalar))
            .collect()
    }
}
