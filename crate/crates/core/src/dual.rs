//! Dual of the guessing-probability SDP.
//!
//! For constraints `Tr[rho W_k] = w_k` (equality) and
//! `wL_j <= Tr[rho W_j] <= wU_j` (interval), any multipliers `y`, `zL, zU >= 0`
//! give the upper bound
//!
//! ```text
//! p_guess <= y0 + sum_k y_k w_k + sum_j (zU_j wU_j - zL_j wL_j),
//! y0 = max_l lambda_max(|l><l| (x) 1 - sum_k y_k W_k - sum_j (zU_j - zL_j) W_j).
//! ```
//!
//! The optimizer works in free coordinates: one real per equality (`y_k`) and
//! one real `s_j` per interval with `zU_j = max(s_j, 0)`, `zL_j = max(-s_j, 0)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimize::{minimize_convex_1d, nelder_mead, NelderMeadOptions};
use crate::spectra::{band_toeplitz, hermitian_eigenvalues, lambda_max_blocked, BandSpectrum};
use crate::witness::{ConstraintKind, Witness, WitnessConstraint};

/// Slack allowed between `y0` and a recomputed `lambda_max(M_l)`.
pub const LAMBDA_TOL: f64 = 1e-9;
/// Slack allowed when reproducing the objective from the stored point.
pub const OBJECTIVE_TOL: f64 = 1e-10;
/// Largest local dimension whose certificate is checked on the dense
/// `d^2 x d^2` operator; larger ones are checked block by block with a
/// different eigensolver than the one that produced the bound.
pub const DENSE_VERIFY_MAX_DIM: usize = 16;

/// Dual multipliers, in constraint order within each kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualPoint {
    pub y: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualOptions {
    pub starts: usize,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
    /// Use the secular-equation evaluation of `lambda_max` for the
    /// band/off-diagonal pair inside the optimizer.
    pub fast_path: bool,
    /// For the band/off-diagonal pair, also minimize the one-dimensional
    /// profile obtained by eliminating the off-diagonal multiplier exactly.
    pub profile: bool,
    pub polish_rounds: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions {
            starts: 8,
            seed: 0,
            nelder_mead: NelderMeadOptions::default(),
            fast_path: true,
            profile: true,
            polish_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartTrace {
    pub label: String,
    pub start: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Certified bound: `p_guess_ub = y0 + linear(point)` with `y0` from a
/// Jacobi solve of every `M_l`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuessBound {
    pub p_guess_ub: f64,
    pub y0: f64,
    pub point: DualPoint,
    pub lambda_per_ell: Vec<f64>,
    pub objective_trace: Vec<StartTrace>,
    pub evaluations: usize,
    pub fast_path: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub passed: bool,
    pub dense: bool,
    pub recomputed_y0: f64,
    pub recomputed_objective: f64,
    pub worst_ell: usize,
    /// `max_l lambda_max(M_l) - y0`; positive means `y0` is understated.
    pub lambda_excess: f64,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone)]
enum Kernel {
    Pair {
        band: usize,
        off: usize,
        q: Vec<f64>,
        p: f64,
        spectrum: BandSpectrum,
    },
    Dense {
        matrices: Vec<DMatrix<Complex64>>,
    },
}

/// A set of witness constraints prepared for repeated dual evaluation.
#[derive(Debug, Clone)]
pub struct DualProblem {
    dim: usize,
    constraints: Vec<WitnessConstraint>,
    kernel: Kernel,
}

impl DualProblem {
    pub fn new(dim: usize, constraints: Vec<WitnessConstraint>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(dim));
        }
        for c in &constraints {
            if c.operator.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.operator.dim(),
                });
            }
        }
        let pair = match constraints.as_slice() {
            [a, b] => match (&a.operator, &b.operator) {
                (Witness::Band(w), Witness::OffDiagonal(o)) => Some((0, 1, w, o)),
                (Witness::OffDiagonal(o), Witness::Band(w)) => Some((1, 0, w, o)),
                _ => None,
            },
            _ => None,
        };
        let kernel = match pair {
            Some((band, off, w, o)) => Kernel::Pair {
                band,
                off,
                q: w.coefficients().to_vec(),
                p: o.p(),
                spectrum: BandSpectrum::new(w.coefficients()),
            },
            None => Kernel::Dense {
                matrices: constraints.iter().map(|c| c.operator.dense()).collect(),
            },
        };
        Ok(DualProblem {
            dim,
            constraints,
            kernel,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> &[WitnessConstraint] {
        &self.constraints
    }

    /// True for the band/off-diagonal witness pair, whose `M_l` splits into
    /// a `d x d` block and two scalar eigenvalues.
    pub fn is_blocked(&self) -> bool {
        matches!(self.kernel, Kernel::Pair { .. })
    }

    pub fn zero_point(&self) -> DualPoint {
        let (ne, ni) = self.counts();
        DualPoint {
            y: vec![0.0; ne],
            z_lower: vec![0.0; ni],
            z_upper: vec![0.0; ni],
        }
    }

    fn counts(&self) -> (usize, usize) {
        let ne = self
            .constraints
            .iter()
            .filter(|c| matches!(c.kind, ConstraintKind::Equality(_)))
            .count();
        (ne, self.constraints.len() - ne)
    }

    fn check_point(&self, point: &DualPoint) -> Result<()> {
        let (ne, ni) = self.counts();
        if point.y.len() != ne || point.z_lower.len() != ni || point.z_upper.len() != ni {
            return Err(Error::InfeasiblePoint(format!(
                "expected {ne} equality and {ni} interval multipliers"
            )));
        }
        let all = point.y.iter().chain(&point.z_lower).chain(&point.z_upper);
        if all.clone().any(|x| !x.is_finite()) {
            return Err(Error::InfeasiblePoint("non-finite multiplier".into()));
        }
        if let Some(z) = point.z_lower.iter().chain(&point.z_upper).find(|&&z| z < 0.0) {
            return Err(Error::InfeasiblePoint(format!("negative interval multiplier {z}")));
        }
        Ok(())
    }

    /// Net coefficient of each witness in `M_l`, in constraint order.
    fn net(&self, point: &DualPoint) -> Vec<f64> {
        let (mut e, mut i) = (0, 0);
        self.constraints
            .iter()
            .map(|c| match c.kind {
                ConstraintKind::Equality(_) => {
                    e += 1;
                    point.y[e - 1]
                }
                ConstraintKind::Interval { .. } => {
                    i += 1;
                    point.z_upper[i - 1] - point.z_lower[i - 1]
                }
            })
            .collect()
    }

    /// `sum_k y_k w_k + sum_j (zU_j wU_j - zL_j wL_j)`.
    pub fn linear_term(&self, point: &DualPoint) -> f64 {
        let (mut e, mut i) = (0, 0);
        self.constraints
            .iter()
            .map(|c| match c.kind {
                ConstraintKind::Equality(w) => {
                    e += 1;
                    point.y[e - 1] * w
                }
                ConstraintKind::Interval { lo, hi } => {
                    i += 1;
                    point.z_upper[i - 1] * hi - point.z_lower[i - 1] * lo
                }
            })
            .sum()
    }

    fn point_from_x(&self, x: &[f64]) -> DualPoint {
        let mut point = DualPoint {
            y: vec![],
            z_lower: vec![],
            z_upper: vec![],
        };
        for (c, &xi) in self.constraints.iter().zip(x) {
            match c.kind {
                ConstraintKind::Equality(_) => point.y.push(xi),
                ConstraintKind::Interval { .. } => {
                    point.z_upper.push(xi.max(0.0));
                    point.z_lower.push((-xi).max(0.0));
                }
            }
        }
        point
    }

    /// `M_l = |l><l| (x) 1 - sum (net multiplier) W`.
    pub fn assemble_m(&self, ell: usize, point: &DualPoint) -> Result<DMatrix<Complex64>> {
        self.check_point(point)?;
        self.check_ell(ell)?;
        let net = self.net(point);
        Ok(self.assemble_net(ell, &net))
    }

    fn check_ell(&self, ell: usize) -> Result<()> {
        if ell >= self.dim {
            return Err(Error::Index(format!("outcome {ell} outside 0..{}", self.dim)));
        }
        Ok(())
    }

    fn assemble_net(&self, ell: usize, net: &[f64]) -> DMatrix<Complex64> {
        let d = self.dim;
        let n = d * d;
        let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for j in 0..d {
            m[(ell * d + j, ell * d + j)] = Complex64::new(1.0, 0.0);
        }
        for (k, (c, &y)) in self.constraints.iter().zip(net).enumerate() {
            if y == 0.0 {
                continue;
            }
            match &self.kernel {
                Kernel::Dense { matrices } => m -= matrices[k].map(|z| z * y),
                Kernel::Pair { .. } => m -= c.operator.dense().map(|z| z * y),
            }
        }
        m
    }

    /// `lambda_max(M_l)` for every `l`, by Jacobi: on the `d x d` block plus
    /// the two scalar eigenvalues for the witness pair, on the dense matrix
    /// otherwise.
    pub fn lambda_per_ell(&self, point: &DualPoint) -> Result<Vec<f64>> {
        self.check_point(point)?;
        let net = self.net(point);
        match &self.kernel {
            Kernel::Pair {
                band, off, q, p, ..
            } => {
                // M_l and M_{d-1-l} are permutation-similar (Q is centrosymmetric)
                let half: Vec<f64> = (0..self.dim.div_ceil(2))
                    .into_par_iter()
                    .map(|l| lambda_max_blocked(l, q, *p, net[*band], net[*off]))
                    .collect();
                Ok((0..self.dim)
                    .map(|l| half[l.min(self.dim - 1 - l)])
                    .collect())
            }
            Kernel::Dense { .. } => self.lambda_dense_all(&net),
        }
    }

    /// Per-block `lambda_max` for the witness pair from nalgebra's
    /// Householder/QR eigensolver, independent of the Jacobi sweeps.
    fn lambda_blocked_qr(&self, net: &[f64]) -> Vec<f64> {
        let Kernel::Pair {
            band, off, q, p, ..
        } = &self.kernel
        else {
            unreachable!("blocked check on a dense problem");
        };
        let (y1, tau) = (net[*band], net[*off]);
        let base = band_toeplitz(q).scale(-y1);
        let scalar = (1.0 - tau * p).max(-tau * p);
        (0..self.dim)
            .into_par_iter()
            .map(|l| {
                let mut block = base.clone();
                block[(l, l)] += 1.0;
                let top = nalgebra::SymmetricEigen::new(block)
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                top.max(scalar)
            })
            .collect()
    }

    fn lambda_dense_all(&self, net: &[f64]) -> Result<Vec<f64>> {
        let compute = |l: usize| {
            hermitian_eigenvalues(&self.assemble_net(l, net))
                .map(|v| v.last().copied().unwrap_or(f64::NEG_INFINITY))
        };
        if self.dim * self.dim > 256 {
            // keep at most one large matrix alive at a time
            (0..self.dim).map(compute).collect()
        } else {
            (0..self.dim).into_par_iter().map(compute).collect()
        }
    }

    /// Dual objective at `point`, with `y0` from [`Self::lambda_per_ell`].
    pub fn objective(&self, point: &DualPoint) -> Result<f64> {
        let lambdas = self.lambda_per_ell(point)?;
        let y0 = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(y0 + self.linear_term(point))
    }

    /// `y0` for net multipliers, as used inside the optimizer.
    fn y0_search(&self, net: &[f64], fast: bool) -> f64 {
        match &self.kernel {
            Kernel::Pair {
                band,
                off,
                q,
                p,
                spectrum,
            } => {
                let (y1, tau) = (net[*band], net[*off]);
                let scalar = (1.0 - tau * p).max(-tau * p);
                // Q is centrosymmetric, so l and d-1-l share their spectrum
                let half = self.dim.div_ceil(2);
                let block = (0..half)
                    .map(|l| {
                        if fast {
                            spectrum.lambda_max(l, y1)
                        } else {
                            lambda_max_blocked(l, q, *p, y1, tau)
                        }
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                block.max(scalar)
            }
            Kernel::Dense { .. } => self
                .lambda_dense_all(net)
                .map(|v| v.into_iter().fold(f64::NEG_INFINITY, f64::max))
                .unwrap_or(f64::INFINITY),
        }
    }

    fn search_value(&self, x: &[f64], fast: bool) -> f64 {
        let point = self.point_from_x(x);
        let net = self.net(&point);
        self.y0_search(&net, fast) + self.linear_term(&point)
    }

    fn scales(&self) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                let b = c.operator.norm_bound();
                if b > 0.0 {
                    1.0 / b
                } else {
                    1.0
                }
            })
            .collect()
    }

    fn starting_points(&self, opts: &DualOptions, fast: bool) -> Vec<(String, Vec<f64>)> {
        let n = self.constraints.len();
        let scales = self.scales();
        let mut out: Vec<(String, Vec<f64>)> = vec![("zero".into(), vec![0.0; n])];
        for k in 0..n {
            let mut best = (self.search_value(&vec![0.0; n], fast), 0.0);
            for m in -6..=3 {
                for sign in [1.0, -1.0] {
                    let t = sign * scales[k] * 2f64.powi(m);
                    let mut x = vec![0.0; n];
                    x[k] = t;
                    let v = self.search_value(&x, fast);
                    if v < best.0 {
                        best = (v, t);
                    }
                }
            }
            let mut x = vec![0.0; n];
            x[k] = best.1;
            out.push((format!("line{k}"), x));
        }
        for k in 0..n {
            for sign in [1.0, -1.0] {
                let mut x = vec![0.0; n];
                x[k] = sign * scales[k];
                out.push((format!("{}e{k}", if sign > 0.0 { '+' } else { '-' }), x));
            }
        }
        out.truncate(opts.starts);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut r = 0;
        while out.len() < opts.starts {
            let x = scales.iter().map(|s| rng.gen_range(-2.0..2.0) * s).collect();
            out.push((format!("random{r}"), x));
            r += 1;
        }
        out
    }

    /// Profile of the pair objective over the band multiplier, with the
    /// off-diagonal multiplier set to its optimum `(1 - A(y1)) / p`.
    fn profile_minimum(&self, fast: bool, x_hint: &[f64]) -> Option<Vec<f64>> {
        let Kernel::Pair {
            band,
            off,
            p,
            spectrum,
            q,
        } = &self.kernel
        else {
            return None;
        };
        if !matches!(self.constraints[*off].kind, ConstraintKind::Equality(_)) {
            return None;
        }
        if *p <= 0.0 {
            return None;
        }
        let half = self.dim.div_ceil(2);
        let a_of = |y1: f64| {
            (0..half)
                .map(|l| {
                    if fast {
                        spectrum.lambda_max(l, y1)
                    } else {
                        // tau large enough that the scalar branches stay below
                        lambda_max_blocked(l, q, *p, y1, 1e300)
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let tau_of = |y1: f64| (1.0 - a_of(y1)) / p;
        let assemble = |y1: f64| {
            let mut x = vec![0.0; 2];
            x[*band] = y1;
            x[*off] = tau_of(y1);
            x
        };
        let f = |y1: f64| self.search_value(&assemble(y1), fast);
        let scale = self.scales()[*band];
        let start = x_hint[*band];
        let (y1, _) = minimize_convex_1d(f, start, 0.05 * scale, 1e-13 * scale.max(start.abs()));
        Some(assemble(y1))
    }

    /// Multi-start minimization of the dual objective followed by
    /// certification of the best point.
    pub fn minimize(&self, opts: &DualOptions) -> Result<GuessBound> {
        if opts.starts == 0 {
            return Err(Error::Config("at least one optimizer start is required".into()));
        }
        let n = self.constraints.len();
        let fast = opts.fast_path && self.is_blocked();
        let scales = self.scales();
        let starts = self.starting_points(opts, fast);

        let runs: Vec<(Vec<f64>, StartTrace)> = starts
            .into_par_iter()
            .map(|(label, start)| {
                let steps: Vec<f64> = start
                    .iter()
                    .zip(&scales)
                    .map(|(x, s)| (0.25 * s).max(0.1 * x.abs()))
                    .collect();
                let m = nelder_mead(|x| self.search_value(x, fast), &start, &steps, &opts.nelder_mead);
                let trace = StartTrace {
                    label,
                    start,
                    value: m.value,
                    evals: m.evals,
                    converged: m.converged,
                };
                (m.x, trace)
            })
            .collect();
        let mut evaluations: usize = runs.iter().map(|(_, t)| t.evals).sum();
        let mut trace: Vec<StartTrace> = runs.iter().map(|(_, t)| t.clone()).collect();
        let (mut best_x, mut best_v) = runs
            .iter()
            .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
            .map(|(x, t)| (x.clone(), t.value))
            .unwrap_or((vec![0.0; n], 1.0));

        for round in 0..opts.polish_rounds {
            let steps: Vec<f64> = best_x
                .iter()
                .zip(&scales)
                .map(|(x, s)| 1e-3 * (x.abs() + 1e-2 * s))
                .collect();
            let m = nelder_mead(|x| self.search_value(x, fast), &best_x, &steps, &opts.nelder_mead);
            evaluations += m.evals;
            trace.push(StartTrace {
                label: format!("polish{round}"),
                start: best_x.clone(),
                value: m.value,
                evals: m.evals,
                converged: m.converged,
            });
            let improved = best_v - m.value;
            if m.value < best_v {
                best_x = m.x;
                best_v = m.value;
            }
            if improved <= 1e-13 {
                break;
            }
        }

        if opts.profile {
            if let Some(x) = self.profile_minimum(fast, &best_x) {
                let v = self.search_value(&x, fast);
                trace.push(StartTrace {
                    label: "profile".into(),
                    start: best_x.clone(),
                    value: v,
                    evals: 0,
                    converged: true,
                });
                if v < best_v {
                    best_x = x;
                }
            }
        }

        let mut point = self.point_from_x(&best_x);
        let mut lambdas = self.lambda_per_ell(&point)?;
        let mut y0 = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut value = y0 + self.linear_term(&point);
        if !(value <= 1.0) {
            // the zero point certifies p_guess <= 1 exactly
            point = self.zero_point();
            lambdas = self.lambda_per_ell(&point)?;
            y0 = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            value = y0 + self.linear_term(&point);
        }
        Ok(GuessBound {
            p_guess_ub: value,
            y0,
            point,
            lambda_per_ell: lambdas,
            objective_trace: trace,
            evaluations,
            fast_path: fast,
        })
    }

    /// Independent re-check of a bound: recomputes every `lambda_max(M_l)`
    /// (densely when `d <= DENSE_VERIFY_MAX_DIM`) and the objective.
    pub fn verify(&self, bound: &GuessBound) -> Result<CertificateReport> {
        let mut messages = Vec::new();
        if let Err(e) = self.check_point(&bound.point) {
            return Ok(CertificateReport {
                passed: false,
                dense: false,
                recomputed_y0: f64::NAN,
                recomputed_objective: f64::NAN,
                worst_ell: 0,
                lambda_excess: f64::NAN,
                messages: vec![e.to_string()],
            });
        }
        let net = self.net(&bound.point);
        let dense = self.dim <= DENSE_VERIFY_MAX_DIM || !self.is_blocked();
        let lambdas = if dense {
            self.lambda_dense_all(&net)?
        } else {
            self.lambda_blocked_qr(&net)
        };
        let (worst_ell, recomputed_y0) = lambdas
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("dim >= 2");
        let lambda_excess = recomputed_y0 - bound.y0;
        if lambda_excess > LAMBDA_TOL {
            messages.push(format!(
                "y0 = {} understates lambda_max(M_{worst_ell}) = {recomputed_y0}",
                bound.y0
            ));
        }
        let linear = self.linear_term(&bound.point);
        let recomputed_objective = recomputed_y0.max(bound.y0) + linear;
        if (bound.p_guess_ub - (bound.y0 + linear)).abs() > OBJECTIVE_TOL {
            messages.push(format!(
                "p_guess_ub = {} does not match y0 + linear = {}",
                bound.p_guess_ub,
                bound.y0 + linear
            ));
        }
        if !(bound.p_guess_ub > 0.0 && bound.p_guess_ub <= 1.0 + LAMBDA_TOL) {
            messages.push(format!("p_guess_ub = {} outside (0, 1]", bound.p_guess_ub));
        }
        Ok(CertificateReport {
            passed: messages.is_empty(),
            dense,
            recomputed_y0,
            recomputed_objective,
            worst_ell,
            lambda_excess,
            messages,
        })
    }
}

/// `M_l` for a constraint list and point.
pub fn assemble_m(
    ell: usize,
    dim: usize,
    constraints: &[WitnessConstraint],
    point: &DualPoint,
) -> Result<DMatrix<Complex64>> {
    DualProblem::new(dim, constraints.to_vec())?.assemble_m(ell, point)
}

pub fn objective(dim: usize, constraints: &[WitnessConstraint], point: &DualPoint) -> Result<f64> {
    DualProblem::new(dim, constraints.to_vec())?.objective(point)
}

pub fn minimize(dim: usize, constraints: &[WitnessConstraint], opts: &DualOptions) -> Result<GuessBound> {
    DualProblem::new(dim, constraints.to_vec())?.minimize(opts)
}

pub fn verify_certificate(
    dim: usize,
    constraints: &[WitnessConstraint],
    bound: &GuessBound,
) -> Result<CertificateReport> {
    DualProblem::new(dim, constraints.to_vec())?.verify(bound)
}
