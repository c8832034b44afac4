//! Time-of-arrival (TT) and temporal-superposition (SS) click statistics,
//! and their inversion into density-matrix elements.
//!
//! SS values use the normalization in which the four outcomes `(a, b)` of
//! one setting add up to the TT mass of the four bins they interfere,
//! `TT(i,j) + TT(i,j-1) + TT(i-1,j) + TT(i-1,j-1)`. That is four times the
//! Born probability of the polarization-resolved projector acting on
//! `|DD><DD| (x) rho`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{DensityMatrix, NoiseModelSpec};

/// Two settings are the same if their phases agree to this tolerance.
pub const PHASE_TOL: f64 = 1e-9;

/// One TSUP setting: bins `(i, j)` (both >= 1) and analyzer phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TsupSetting {
    pub i: usize,
    pub j: usize,
    pub phi_a: f64,
    pub phi_b: f64,
}

impl TsupSetting {
    pub fn new(i: usize, j: usize, phi_a: f64, phi_b: f64) -> Self {
        TsupSetting { i, j, phi_a, phi_b }
    }

    pub fn same_as(&self, other: &TsupSetting) -> bool {
        self.i == other.i
            && self.j == other.j
            && (self.phi_a - other.phi_a).abs() <= PHASE_TOL
            && (self.phi_b - other.phi_b).abs() <= PHASE_TOL
    }
}

/// The four outcome probabilities of a setting, indexed `[a - 1][b - 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TsupOutcomes(pub [[Option<f64>; 2]; 2]);

impl TsupOutcomes {
    pub fn complete(values: [[f64; 2]; 2]) -> Self {
        TsupOutcomes(values.map(|row| row.map(Some)))
    }

    pub fn get(&self, a: u8, b: u8) -> Option<f64> {
        self.0[(a - 1) as usize][(b - 1) as usize]
    }

    pub fn set(&mut self, a: u8, b: u8, value: f64) {
        self.0[(a - 1) as usize][(b - 1) as usize] = Some(value);
    }

    pub fn total(&self) -> f64 {
        self.0.iter().flatten().flatten().sum()
    }
}

/// TT joint probabilities and SS click probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickTables {
    pub dim: usize,
    pub tt: DMatrix<f64>,
    pub ss: Vec<(TsupSetting, TsupOutcomes)>,
}

impl ClickTables {
    pub fn find(&self, setting: &TsupSetting) -> Option<&TsupOutcomes> {
        self.ss
            .iter()
            .find(|(s, _)| s.same_as(setting))
            .map(|(_, o)| o)
    }

    /// Bin pairs `(i, j)` that carry at least one SS setting, in order.
    pub fn measured_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = self.ss.iter().map(|(s, _)| (s.i, s.j)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Sum of TT over the `2 x 2` bin block interfered by setting `(i, j)`.
    pub fn block_mass(&self, i: usize, j: usize) -> f64 {
        self.tt[(i, j)] + self.tt[(i, j - 1)] + self.tt[(i - 1, j)] + self.tt[(i - 1, j - 1)]
    }

    /// Tables conditioned on both parties landing in `block`, re-indexed to
    /// `0..block.len()`, together with the probability of that event. SS
    /// settings survive only when both interfering bins of each party are
    /// adjacent members of the block.
    pub fn restrict(&self, block: &[usize]) -> Result<(f64, ClickTables)> {
        if block.is_empty() {
            return Err(Error::Index("empty subspace".into()));
        }
        if let Some(&bad) = block.iter().find(|&&i| i >= self.dim) {
            return Err(Error::Index(format!("bin {bad} outside 0..{}", self.dim)));
        }
        let n = block.len();
        let weight: f64 = block
            .iter()
            .flat_map(|&i| block.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.tt[(i, j)])
            .sum();
        if weight < crate::states::MIN_SUBSPACE_WEIGHT {
            return Err(Error::EmptySubspace(weight));
        }
        let position = |bin: usize| block.iter().position(|&b| b == bin);
        let local = |bin: usize| -> Option<usize> {
            let p = position(bin)?;
            (p >= 1 && bin >= 1 && position(bin - 1) == Some(p - 1)).then_some(p)
        };
        let tt = DMatrix::from_fn(n, n, |a, b| self.tt[(block[a], block[b])] / weight);
        let ss = self
            .ss
            .iter()
            .filter_map(|(s, o)| {
                let (i, j) = (local(s.i)?, local(s.j)?);
                let mut scaled = *o;
                for row in scaled.0.iter_mut() {
                    for x in row.iter_mut().flatten() {
                        *x /= weight;
                    }
                }
                Some((TsupSetting::new(i, j, s.phi_a, s.phi_b), scaled))
            })
            .collect();
        Ok((weight, ClickTables { dim: n, tt, ss }))
    }
}

/// Real parts recovered from click data, keyed by `(i, j)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExtractedElements {
    pub dim: usize,
    /// `TT(i, j) = <i,j| rho |i,j>`.
    pub diag: Vec<Vec<f64>>,
    /// `Re <i,j| rho^T |i-1,j-1>`.
    pub re_nn: BTreeMap<(usize, usize), f64>,
    /// `Re <i,j-1| rho^T |i-1,j>`.
    pub re_cross: BTreeMap<(usize, usize), f64>,
    /// Lower bounds on `Re <i,j| rho^T |i-1,j-1>` where only the x setting
    /// was measured.
    pub lower_bounds: BTreeMap<(usize, usize), f64>,
    pub warnings: Vec<String>,
}

fn check_bins(d: usize, i: usize, j: usize) -> Result<()> {
    if i == 0 || j == 0 || i >= d || j >= d {
        return Err(Error::Index(format!(
            "TSUP bins (i, j) = ({i}, {j}) must lie in 1..{d}"
        )));
    }
    Ok(())
}

fn outcome_signs(a: u8, b: u8) -> Result<(f64, f64)> {
    let sign = |x: u8| match x {
        1 => Ok(1.0),
        2 => Ok(-1.0),
        _ => Err(Error::Index(format!("detector label {x} is not 1 or 2"))),
    };
    Ok((sign(a)?, sign(b)?))
}

/// `TT(i, j) = <i,j| rho |i,j>`.
pub fn toa_table(rho: &DensityMatrix) -> DMatrix<f64> {
    let d = rho.dim();
    DMatrix::from_fn(d, d, |i, j| rho.element((i, j), (i, j)).re)
}

/// `SS_{a,b}(i, j, phi_a, phi_b)`: the sixteen-term expansion over the bins
/// `{i, i-1} x {j, j-1}` written with `rho^T`, divided by four.
pub fn tsup_click(
    rho: &DensityMatrix,
    a: u8,
    b: u8,
    i: usize,
    j: usize,
    phi_a: f64,
    phi_b: f64,
) -> Result<f64> {
    tsup_click_with(rho.dim(), |r, c| rho.element(r, c), a, b, i, j, phi_a, phi_b)
}

/// [`tsup_click`] for a state given by its element function
/// `((i, j), (k, l)) -> <i,j| rho |k,l>`.
#[allow(clippy::too_many_arguments)]
pub fn tsup_click_with<F>(
    d: usize,
    element: F,
    a: u8,
    b: u8,
    i: usize,
    j: usize,
    phi_a: f64,
    phi_b: f64,
) -> Result<f64>
where
    F: Fn((usize, usize), (usize, usize)) -> Complex64,
{
    check_bins(d, i, j)?;
    let (sa, sb) = outcome_signs(a, b)?;
    // coefficient of each bin pair in the interfering superposition
    let alice = [(i, Complex64::new(1.0, 0.0)), (i - 1, Complex64::from_polar(sa, -phi_a))];
    let bob = [(j, Complex64::new(1.0, 0.0)), (j - 1, Complex64::from_polar(sb, -phi_b))];
    let terms: Vec<((usize, usize), Complex64)> = alice
        .iter()
        .flat_map(|&(x, cx)| bob.iter().map(move |&(y, cy)| ((x, y), cx * cy)))
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    for &(row, c_row) in &terms {
        for &(col, c_col) in &terms {
            // <row| rho^T |col> = <col| rho |row>
            total += c_row * c_col.conj() * element(col, row);
        }
    }
    Ok(total.re / 4.0)
}

/// Independent evaluation of [`tsup_click`]: builds the analyzer states
/// `|Psi_a(i, phi_a)> (x) |Psi_b(j, phi_b)>` on polarization (x) time for both
/// photons, applies the Born rule to `|DD><DD| (x) rho`, and rescales to the
/// click normalization.
pub fn tsup_click_oracle(
    rho: &DensityMatrix,
    a: u8,
    b: u8,
    i: usize,
    j: usize,
    phi_a: f64,
    phi_b: f64,
) -> Result<f64> {
    let d = rho.dim();
    check_bins(d, i, j)?;
    let (sa, sb) = outcome_signs(a, b)?;
    let local = 2 * d; // polarization (H = 0, V = 1) major, time minor
    let half = std::f64::consts::FRAC_1_SQRT_2;

    let analyzer = |bin: usize, sign: f64, phi: f64| {
        let mut v = vec![Complex64::new(0.0, 0.0); local];
        v[bin] = Complex64::new(half, 0.0);
        v[d + bin - 1] = Complex64::from_polar(half * sign, -phi);
        v
    };
    let psi_a = analyzer(i, sa, phi_a);
    let psi_b = analyzer(j, sb, phi_b);
    let psi: Vec<Complex64> = psi_a
        .iter()
        .flat_map(|&x| psi_b.iter().map(move |&y| x * y))
        .collect();

    // |DD><DD| (x) rho, ordered (pol_A, time_A, pol_B, time_B)
    let n = local * local;
    let diag_pol = half; // <H|D> = <V|D>
    let state = DMatrix::from_fn(n, n, |r, c| {
        let (ra, rb) = (r / local, r % local);
        let (ca, cb) = (c / local, c % local);
        let (ta, tb) = (ra % d, rb % d);
        let (ua, ub) = (ca % d, cb % d);
        let pol = diag_pol.powi(4);
        rho.element((ta, tb), (ua, ub)) * pol
    });
    let mut born = Complex64::new(0.0, 0.0);
    for r in 0..n {
        if psi[r] == Complex64::new(0.0, 0.0) {
            continue;
        }
        for c in 0..n {
            born += psi[r].conj() * state[(r, c)] * psi[c];
        }
    }
    Ok(4.0 * born.re)
}

/// All four outcomes of one setting.
pub fn tsup_outcomes(rho: &DensityMatrix, setting: &TsupSetting) -> Result<TsupOutcomes> {
    let mut out = TsupOutcomes::default();
    for a in 1..=2 {
        for b in 1..=2 {
            let p = tsup_click(rho, a, b, setting.i, setting.j, setting.phi_a, setting.phi_b)?;
            out.set(a, b, p);
        }
    }
    Ok(out)
}

/// `SS_11 - SS_12 - SS_21 + SS_22`.
pub fn d_combination(outcomes: &TsupOutcomes) -> Result<f64> {
    let get = |a, b| {
        outcomes
            .get(a, b)
            .ok_or_else(|| Error::IncompleteSetting(format!("outcome ({a}, {b}) missing")))
    };
    Ok(get(1, 1)? - get(1, 2)? - get(2, 1)? + get(2, 2)?)
}

/// `(Re <i,j|rho^T|i-1,j-1>, Re <i,j-1|rho^T|i-1,j>)` from the x and y
/// combinations.
pub fn extract_re_offdiag(d_x: f64, d_y: f64) -> (f64, f64) {
    (0.25 * (d_x - d_y), 0.25 * (d_x + d_y))
}

/// Lower bound on `Re <i,j|rho^T|i-1,j-1>` from the x combination alone:
/// `D(i,j,0,0)/2 - sqrt(TT(i-1,j) TT(i,j-1))`.
pub fn xonly_lower_bound(d_x: f64, tt: &DMatrix<f64>, i: usize, j: usize) -> Result<f64> {
    if i == 0 || j == 0 || i >= tt.nrows() || j >= tt.ncols() {
        return Err(Error::Index(format!("bins ({i}, {j}) out of range")));
    }
    let radicand = (tt[(i - 1, j)] * tt[(i, j - 1)]).max(0.0);
    Ok(0.5 * d_x - radicand.sqrt())
}

/// Which TSUP settings to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingPlan {
    /// `(i, i)` for `i = 1..d`, enough for the correlated-bin band.
    CorrelatedBins,
    /// Every `(i, j)` with `i, j >= 1`.
    AllPairs,
}

/// The x (`phi = 0`) and y (`phi = pi/2`) phase settings.
pub const XY_PHASES: [(f64, f64); 2] = [(0.0, 0.0), (FRAC_PI_2, FRAC_PI_2)];

/// Noise-free click tables for `rho`.
pub fn simulate(rho: &DensityMatrix, plan: SettingPlan, phases: &[(f64, f64)]) -> Result<ClickTables> {
    simulate_with(rho.dim(), |r, c| rho.element(r, c), plan, phases)
}

/// Noise-free click tables for the isotropic model, computed from its
/// closed-form elements without building the `d^2 x d^2` matrix.
pub fn simulate_model(model: &NoiseModelSpec, plan: SettingPlan, phases: &[(f64, f64)]) -> Result<ClickTables> {
    simulate_with(model.dim, |r, c| model.element(r, c), plan, phases)
}

fn simulate_with<F>(d: usize, element: F, plan: SettingPlan, phases: &[(f64, f64)]) -> Result<ClickTables>
where
    F: Fn((usize, usize), (usize, usize)) -> Complex64 + Copy,
{
    let pairs: Vec<(usize, usize)> = match plan {
        SettingPlan::CorrelatedBins => (1..d).map(|i| (i, i)).collect(),
        SettingPlan::AllPairs => (1..d).flat_map(|i| (1..d).map(move |j| (i, j))).collect(),
    };
    let mut ss = Vec::with_capacity(pairs.len() * phases.len());
    for &(i, j) in &pairs {
        for &(pa, pb) in phases {
            let setting = TsupSetting::new(i, j, pa, pb);
            let mut out = TsupOutcomes::default();
            for a in 1..=2 {
                for b in 1..=2 {
                    out.set(a, b, tsup_click_with(d, element, a, b, i, j, pa, pb)?);
                }
            }
            ss.push((setting, out));
        }
    }
    Ok(ClickTables {
        dim: d,
        tt: DMatrix::from_fn(d, d, |i, j| element((i, j), (i, j)).re),
        ss,
    })
}

/// Diagonal elements plus every real part the SS data give access to.
/// Pairs with only the x setting produce lower bounds (with a warning);
/// pairs without the x setting are skipped.
pub fn extract(tables: &ClickTables) -> Result<ExtractedElements> {
    let d = tables.dim;
    let mut out = ExtractedElements {
        dim: d,
        diag: (0..d).map(|i| (0..d).map(|j| tables.tt[(i, j)]).collect()).collect(),
        ..Default::default()
    };
    for (i, j) in tables.measured_pairs() {
        check_bins(d, i, j)?;
        let x = tables.find(&TsupSetting::new(i, j, 0.0, 0.0));
        let y = tables.find(&TsupSetting::new(i, j, FRAC_PI_2, FRAC_PI_2));
        match (x, y) {
            (Some(x), Some(y)) => {
                let (nn, cross) = extract_re_offdiag(d_combination(x)?, d_combination(y)?);
                out.re_nn.insert((i, j), nn);
                out.re_cross.insert((i, j), cross);
            }
            (Some(x), None) => {
                let bound = xonly_lower_bound(d_combination(x)?, &tables.tt, i, j)?;
                out.lower_bounds.insert((i, j), bound);
                out.warnings.push(format!(
                    "bins ({i}, {j}): y setting missing, using the x-only lower bound"
                ));
            }
            (None, _) => out.warnings.push(format!(
                "bins ({i}, {j}): x setting missing, no element extracted"
            )),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{isotropic, max_entangled, random_state, NoiseModelSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn model_tables_match_dense_state() {
        let model = NoiseModelSpec::new(5, 0.83).unwrap();
        let a = simulate_model(&model, SettingPlan::AllPairs, &XY_PHASES).unwrap();
        let b = simulate(&model.state().unwrap(), SettingPlan::AllPairs, &XY_PHASES).unwrap();
        assert!((&a.tt - &b.tt).abs().max() < 1e-16);
        for ((sa, oa), (sb, ob)) in a.ss.iter().zip(&b.ss) {
            assert_eq!(sa, sb);
            for x in 1..=2 {
                for y in 1..=2 {
                    assert!((oa.get(x, y).unwrap() - ob.get(x, y).unwrap()).abs() < 1e-16);
                }
            }
        }
    }

    #[test]
    fn restriction_matches_conditional_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rho = random_state(6, false, &mut rng);
        let tables = simulate(&rho, SettingPlan::AllPairs, &XY_PHASES).unwrap();
        for block in [vec![0, 1, 2], vec![3, 4, 5], vec![1, 2, 4]] {
            let (w, sub) = tables.restrict(&block).unwrap();
            let (pw, cond) = crate::states::project_subspace(&rho, &block).unwrap();
            assert!((w - pw).abs() < 1e-15);
            let direct = simulate(&cond, SettingPlan::AllPairs, &XY_PHASES).unwrap();
            assert!((&sub.tt - &direct.tt).abs().max() < 1e-14);
            for (s, o) in &sub.ss {
                let reference = direct.find(s).expect("setting kept");
                for x in 1..=2 {
                    for y in 1..=2 {
                        assert!((o.get(x, y).unwrap() - reference.get(x, y).unwrap()).abs() < 1e-14);
                    }
                }
            }
            let adjacent = block.windows(2).filter(|w| w[1] == w[0] + 1).count();
            assert_eq!(sub.ss.len(), adjacent * adjacent * XY_PHASES.len());
        }
    }

    #[test]
    fn toa_of_known_states() {
        let tt = toa_table(&max_entangled(2).unwrap());
        assert_eq!(tt, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
        let tt = toa_table(&isotropic(4, 0.8).unwrap());
        assert!((tt[(0, 0)] - 0.2125).abs() < 1e-15);
        assert!((tt[(0, 1)] - 0.0125).abs() < 1e-15);
        let tt = toa_table(&isotropic(3, 0.0).unwrap());
        assert!(tt.iter().all(|&x| (x - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn tsup_on_maximally_mixed() {
        for d in 2..5 {
            let rho = isotropic(d, 0.0).unwrap();
            let expect = 1.0 / (d * d) as f64;
            for (pa, pb) in [(0.0, 0.0), (FRAC_PI_2, FRAC_PI_2), (0.3, -1.1)] {
                for a in 1..=2 {
                    for b in 1..=2 {
                        let p = tsup_click(&rho, a, b, d - 1, 1, pa, pb).unwrap();
                        assert!((p - expect).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn tsup_on_bell_state() {
        // (1/4)(TT(1,1) + TT(0,0) + 2 Re<1,1|rho|0,0>) = (1/4)(0.5 + 0.5 + 1.0)
        let rho = max_entangled(2).unwrap();
        let p = tsup_click(&rho, 1, 1, 1, 1, 0.0, 0.0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        let q = tsup_click_oracle(&rho, 1, 1, 1, 1, 0.0, 0.0).unwrap();
        assert!((q - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bin_zero_is_an_index_error() {
        let rho = isotropic(3, 0.5).unwrap();
        assert!(matches!(tsup_click(&rho, 1, 1, 0, 1, 0.0, 0.0), Err(Error::Index(_))));
        assert!(matches!(tsup_click_oracle(&rho, 1, 1, 2, 0, 0.0, 0.0), Err(Error::Index(_))));
        assert!(matches!(tsup_click(&rho, 3, 1, 1, 1, 0.0, 0.0), Err(Error::Index(_))));
    }

    #[test]
    fn outcomes_sum_to_block_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_state(3, true, &mut rng);
        let tables = simulate(&rho, SettingPlan::AllPairs, &XY_PHASES).unwrap();
        for (s, o) in &tables.ss {
            assert!((o.total() - tables.block_mass(s.i, s.j)).abs() < 1e-12);
            assert!(o.total() <= 1.0 + 1e-12);
            assert!(o.0.iter().flatten().all(|p| p.unwrap() >= -1e-12));
        }
    }

    #[test]
    fn d_combination_on_isotropic() {
        for v in [0.0, 0.4, 1.0] {
            let rho = isotropic(4, v).unwrap();
            for i in 1..4 {
                let x = tsup_outcomes(&rho, &TsupSetting::new(i, i, 0.0, 0.0)).unwrap();
                let y = tsup_outcomes(&rho, &TsupSetting::new(i, i, FRAC_PI_2, FRAC_PI_2)).unwrap();
                assert!((d_combination(&x).unwrap() - 2.0 * v / 4.0).abs() < 1e-15);
                assert!((d_combination(&y).unwrap() + 2.0 * v / 4.0).abs() < 1e-15);
            }
        }
        let mut partial = TsupOutcomes::complete([[0.1, 0.2], [0.3, 0.4]]);
        partial.0[1][0] = None;
        assert!(matches!(d_combination(&partial), Err(Error::IncompleteSetting(_))));
    }

    #[test]
    fn extraction_on_isotropic() {
        let v = 0.6;
        let (nn, cross) = extract_re_offdiag(v / 2.0, -v / 2.0);
        assert!((nn - v / 4.0).abs() < 1e-15);
        assert_eq!(cross, 0.0);
        assert_eq!(extract_re_offdiag(0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn xonly_examples() {
        let rho = isotropic(4, 1.0).unwrap();
        let tt = toa_table(&rho);
        let x = tsup_outcomes(&rho, &TsupSetting::new(1, 1, 0.0, 0.0)).unwrap();
        let bound = xonly_lower_bound(d_combination(&x).unwrap(), &tt, 1, 1).unwrap();
        assert!((bound - 0.25).abs() < 1e-15);

        let rho = isotropic(4, 0.0).unwrap();
        let tt = toa_table(&rho);
        let bound = xonly_lower_bound(0.0, &tt, 1, 1).unwrap();
        assert!((bound + 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn quarter_weight_xonly_formula_is_not_a_bound() {
        // (|1,1> - |0,0>)/sqrt 2: Re<1,1|rho|0,0> = -1/2 while D(1,1,0,0)/4 = -1/4
        let mut m = DMatrix::from_element(4, 4, Complex64::new(0.0, 0.0));
        for (a, b, x) in [(0, 0, 0.5), (3, 3, 0.5), (0, 3, -0.5), (3, 0, -0.5)] {
            m[(a, b)] = Complex64::new(x, 0.0);
        }
        let rho = DensityMatrix::from_matrix(2, m).unwrap();
        let tt = toa_table(&rho);
        let x = tsup_outcomes(&rho, &TsupSetting::new(1, 1, 0.0, 0.0)).unwrap();
        let dx = d_combination(&x).unwrap();
        let truth = rho.element((1, 1), (0, 0)).re;
        assert!(dx / 4.0 - (tt[(0, 1)] * tt[(1, 0)]).sqrt() > truth);
        assert!(xonly_lower_bound(dx, &tt, 1, 1).unwrap() <= truth + 1e-15);
    }

    #[test]
    fn extract_dispatches_on_available_settings() {
        let rho = isotropic(4, 0.7).unwrap();
        let mut tables = simulate(&rho, SettingPlan::CorrelatedBins, &XY_PHASES).unwrap();
        let full = extract(&tables).unwrap();
        assert_eq!(full.re_nn.len(), 3);
        assert!(full.warnings.is_empty());
        // drop the y setting of (2, 2)
        tables
            .ss
            .retain(|(s, _)| !(s.i == 2 && s.phi_a == FRAC_PI_2));
        let partial = extract(&tables).unwrap();
        assert_eq!(partial.re_nn.len(), 2);
        assert!(partial.lower_bounds.contains_key(&(2, 2)));
        assert_eq!(partial.warnings.len(), 1);
    }
}
