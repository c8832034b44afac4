//! Primal-side lower bounds on the guessing probability.
//!
//! Any POVM `{K_l}` on the two-party space gives the decomposition
//! `sigma_l = sqrt(rho) K_l sqrt(rho)`, which sums to `rho` and therefore
//! satisfies every witness constraint `rho` does. Its value
//! `sum_l Tr[sigma_l (|l><l| (x) 1)]` can never exceed a valid dual bound.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectra::{inverse_sqrt, psd_sqrt};
use crate::states::DensityMatrix;

/// Slack for a sample to count as exceeding the bound. The square root of
/// a rank-deficient state carries errors of order `sqrt(eps)`.
pub const SANDWICH_TOL: f64 = 1e-7;

/// Random POVM with `outcomes` elements on an `n`-dimensional space:
/// `K_l = S^{-1/2} G_l S^{-1/2}` with Wishart `G_l` and `S = sum G_l`.
pub fn random_povm<R: Rng + ?Sized>(n: usize, outcomes: usize, rng: &mut R) -> Result<Vec<DMatrix<Complex64>>> {
    if n == 0 || outcomes == 0 {
        return Err(Error::InvalidDimension(n.min(outcomes)));
    }
    let gs: Vec<DMatrix<Complex64>> = (0..outcomes)
        .map(|_| {
            let a = DMatrix::from_fn(n, n, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            &a * a.adjoint()
        })
        .collect();
    let total = gs.iter().fold(DMatrix::zeros(n, n), |acc, g| acc + g);
    let s = inverse_sqrt(&total)?;
    Ok(gs.iter().map(|g| &s * g * &s).collect())
}

/// `sum_l Tr[sqrt(rho) K_l sqrt(rho) (|l><l| (x) 1)]` given `sqrt(rho)`.
pub fn primal_value_with_sqrt(sqrt_rho: &DMatrix<Complex64>, d: usize, povm: &[DMatrix<Complex64>]) -> Result<f64> {
    let n = d * d;
    if povm.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: povm.len(),
        });
    }
    let mut total = 0.0;
    for (l, k) in povm.iter().enumerate() {
        if k.nrows() != n || k.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: k.nrows(),
            });
        }
        // only the rows of block l contribute to the trace
        let rows = sqrt_rho.rows(l * d, d);
        let left = rows * k;
        for j in 0..d {
            let row = left.row(j);
            let col = sqrt_rho.column(l * d + j);
            total += (row * col)[(0, 0)].re;
        }
    }
    Ok(total)
}

pub fn primal_sample_value(rho: &DensityMatrix, povm: &[DMatrix<Complex64>]) -> Result<f64> {
    primal_value_with_sqrt(&psd_sqrt(rho.matrix())?, rho.dim(), povm)
}

/// POVM measuring Alice's bin: `K_l = |l><l| (x) 1`.
pub fn alice_basis_povm(d: usize) -> Vec<DMatrix<Complex64>> {
    let n = d * d;
    (0..d)
        .map(|l| {
            DMatrix::from_fn(n, n, |a, b| {
                if a == b && a / d == l {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub bound: f64,
    pub samples: usize,
    pub best_sample: f64,
    pub violations: usize,
    /// `bound - best_sample`.
    pub gap: f64,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Compares `bound` against `samples` random POVM values plus Alice's
/// computational-basis measurement. Sample `k` draws from its own ChaCha
/// stream, so results do not depend on the thread count.
pub fn sandwich_check(bound: f64, rho: &DensityMatrix, samples: usize, seed: u64) -> Result<SandwichReport> {
    let d = rho.dim();
    let sqrt_rho = psd_sqrt(rho.matrix())?;
    let mut values = vec![primal_value_with_sqrt(&sqrt_rho, d, &alice_basis_povm(d))?];
    let random: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let povm = random_povm(d * d, d, &mut rng)?;
            primal_value_with_sqrt(&sqrt_rho, d, &povm)
        })
        .collect::<Result<_>>()?;
    values.extend(random);
    let best_sample = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SandwichReport {
        bound,
        samples: values.len(),
        best_sample,
        violations: values.iter().filter(|&&v| v > bound + SANDWICH_TOL).count(),
        gap: bound - best_sample,
    })
}
