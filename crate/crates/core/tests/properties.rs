//! Randomized invariants across the library.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use hdqkd::clickfile::{read_tables, write_ss, write_tt};
use hdqkd::completion::{complete, Entry, PartialRealSymmetric};
use hdqkd::dual::{DualOptions, DualPoint, DualProblem};
use hdqkd::keyrate::cond_entropy_xy;
use hdqkd::measurement::{
    d_combination, extract, simulate, simulate_model, tsup_click, tsup_click_oracle, xonly_lower_bound, SettingPlan,
    TsupOutcomes, TsupSetting, XY_PHASES,
};
use hdqkd::oracle::sandwich_check;
use hdqkd::pipeline::{full_pipeline, rate_from_tables, PipelineConfig, Source};
use hdqkd::spectra::{lambda_max_blocked, lambda_max_symmetric, BandSpectrum};
use hdqkd::states::{isotropic, project_subspace, random_state, NoiseModelSpec, SubspacePartition};
use hdqkd::witness::{khexp_preset, ConstraintKind, pair_constraints, Witness, WitnessConfig};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose()
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn isotropic_states_are_valid(d in 2usize..7, v in 0.0f64..=1.0) {
        let diag = isotropic(d, v).unwrap().validate();
        prop_assert!(diag.hermitian_defect <= 1e-12);
        prop_assert!(diag.trace_defect <= 1e-12);
        prop_assert!(diag.min_eigenvalue >= -1e-12);
    }

    #[test]
    fn conditional_visibility_law(l in 1usize..4, dd in 2usize..4, v in 0.0f64..=1.0) {
        let d = l * dd;
        let rho = isotropic(d, v).unwrap();
        let part = SubspacePartition::contiguous(d, dd).unwrap();
        let mut total = 0.0;
        let v_cond = v / (v + (1.0 - v) * dd as f64 / d as f64);
        let expect = isotropic(dd, v_cond).unwrap();
        for block in part.blocks() {
            let (w, sub) = project_subspace(&rho, block).unwrap();
            total += w;
            prop_assert!((sub.matrix() - expect.matrix()).iter().all(|z| z.norm() < 1e-12));
        }
        let (df, lf, ddf) = (d as f64, l as f64, dd as f64);
        let direct = v * lf * ddf / df + (1.0 - v) * lf * ddf * ddf / (df * df);
        prop_assert!((total - direct).abs() < 1e-12);
    }

    #[test]
    fn tsup_matches_polarization_oracle(seed in any::<u64>(), d in 2usize..5, real in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_state(d, real, &mut rng);
        for i in 1..d {
            for j in 1..d {
                for &(pa, pb) in &XY_PHASES {
                    for a in 1..=2 {
                        for b in 1..=2 {
                            let fast = tsup_click(&rho, a, b, i, j, pa, pb).unwrap();
                            let slow = tsup_click_oracle(&rho, a, b, i, j, pa, pb).unwrap();
                            prop_assert!((fast - slow).abs() < 1e-12);
                            prop_assert!(fast >= -1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn extraction_inverts_simulation(seed in any::<u64>(), d in 2usize..5, real in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_state(d, real, &mut rng);
        let tables = simulate(&rho, SettingPlan::AllPairs, &XY_PHASES).unwrap();
        let ex = extract(&tables).unwrap();
        for i in 1..d {
            for j in 1..d {
                let nn = rho.element((i - 1, j - 1), (i, j)).re;
                let cross = rho.element((i - 1, j), (i, j - 1)).re;
                prop_assert!((ex.re_nn[&(i, j)] - nn).abs() < 1e-12);
                prop_assert!((ex.re_cross[&(i, j)] - cross).abs() < 1e-12);
                let lim = (tables.tt[(i, j)] * tables.tt[(i - 1, j - 1)]).sqrt();
                prop_assert!(ex.re_nn[&(i, j)].abs() <= lim + 1e-10);
            }
        }
    }

    #[test]
    fn xonly_bound_is_below_truth(seed in any::<u64>(), d in 2usize..5, real in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_state(d, real, &mut rng);
        let tables = simulate(&rho, SettingPlan::AllPairs, &XY_PHASES[..1]).unwrap();
        for i in 1..d {
            for j in 1..d {
                let x = tables.find(&TsupSetting::new(i, j, 0.0, 0.0)).unwrap();
                let dx = d_combination(x).unwrap();
                let lb = xonly_lower_bound(dx, &tables.tt, i, j).unwrap();
                prop_assert!(lb <= rho.element((i - 1, j - 1), (i, j)).re + 1e-12);
            }
        }
    }

    #[test]
    fn completion_contains_hidden_entries(seed in any::<u64>(), rank in 1usize..7, hidden in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        let m = random_psd(n, rank, &mut rng);
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| ((j + 1)..n).map(move |l| (j, l))).collect();
        let mut input_hidden = PartialRealSymmetric::from_diagonal(&(0..n).map(|k| m[(k, k)]).collect::<Vec<_>>()).unwrap();
        let mut chosen = vec![false; pairs.len()];
        for _ in 0..hidden {
            chosen[rng.gen_range(0..pairs.len())] = true;
        }
        for (k, &(j, l)) in pairs.iter().enumerate() {
            if !chosen[k] {
                input_hidden.set_known(j, l, m[(j, l)]).unwrap();
            }
        }
        let input = input_hidden;
        let (one, _) = complete(&input, 1).unwrap();
        let (done, _) = complete(&input, 64).unwrap();
        prop_assert!(done.total_width() <= one.total_width() + 1e-12);
        for &(j, l) in &pairs {
            if let Some((lo, hi)) = done.get(j, l).bounds() {
                prop_assert!(lo - 1e-9 <= m[(j, l)] && m[(j, l)] <= hi + 1e-9,
                    "r[{j},{l}] = {} outside [{lo}, {hi}]", m[(j, l)]);
            }
            if let (Some((a, b)), Some((c, e))) = (one.get(j, l).bounds(), done.get(j, l).bounds()) {
                prop_assert!(c >= a - 1e-12 && e <= b + 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn witness_constraints_admit_the_true_values(seed in any::<u64>(), d in 2usize..6, real in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_state(d, real, &mut rng);
        let tables = simulate(&rho, SettingPlan::CorrelatedBins, &XY_PHASES).unwrap();
        let ex = extract(&tables).unwrap();
        let (band, off) = khexp_preset(d, 0.75, 4.0).unwrap();
        let mut warnings = vec![];
        let cs = pair_constraints(&band, &off, &tables.tt, &ex, 64, &mut warnings).unwrap();
        for c in &cs {
            let truth = c.operator.expectation(&rho).unwrap();
            prop_assert!(c.admits(truth, 1e-10), "{truth} vs {:?}", c.kind);
        }
        // with fewer passes the band interval can only be wider
        let narrow = &cs[0];
        let wide = &pair_constraints(&band, &off, &tables.tt, &ex, 1, &mut warnings).unwrap()[0];
        if let (ConstraintKind::Interval { lo: a, hi: b }, ConstraintKind::Interval { lo: c, hi: e }) = (narrow.kind, wide.kind) {
            prop_assert!(a >= c - 1e-12 && b <= e + 1e-12);
        }
    }

    #[test]
    fn dense_witness_matches_structured_form(d in 2usize..6, c in 0.1f64..2.0, s in 0.0f64..8.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let rho = random_state(d, false, &mut rng);
        let (band, off) = khexp_preset(d, c, s).unwrap();
        for w in [Witness::Band(band), Witness::OffDiagonal(off)] {
            let dense = w.dense();
            let explicit = (rho.matrix() * &dense).trace().re;
            prop_assert!((w.expectation(&rho).unwrap() - explicit).abs() < 1e-12);
        }
    }

    #[test]
    fn blocked_and_dense_lambda_agree(seed in any::<u64>(), d in 2usize..10, y1 in -3.0f64..3.0, tau in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = 1.0;
        let spectrum = BandSpectrum::new(&q);
        let all = spectrum.lambda_max_all(p, y1, tau);
        for (ell, &fast) in all.iter().enumerate() {
            let blocked = lambda_max_blocked(ell, &q, p, y1, tau);
            prop_assert!((fast - blocked).abs() < 1e-10 * (1.0 + blocked.abs()));
        }
    }

    #[test]
    fn lambda_max_is_convex(seed in any::<u64>(), n in 2usize..12, t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sym = || {
            let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            &a + a.transpose()
        };
        let (a, b) = (sym(), sym());
        let mid = &a * t + &b * (1.0 - t);
        let chord = t * lambda_max_symmetric(&a) + (1.0 - t) * lambda_max_symmetric(&b);
        prop_assert!(lambda_max_symmetric(&mid) <= chord + 1e-9);
    }

    #[test]
    fn dual_objective_is_convex(seed in any::<u64>(), d in 2usize..6, v in 0.5f64..=1.0, t in 0.0f64..1.0) {
        let tables = simulate_model(&NoiseModelSpec::new(d, v).unwrap(), SettingPlan::CorrelatedBins, &XY_PHASES).unwrap();
        let ex = extract(&tables).unwrap();
        let (band, off) = khexp_preset(d, 0.75, 4.0).unwrap();
        let cs = pair_constraints(&band, &off, &tables.tt, &ex, 64, &mut vec![]).unwrap();
        let problem = DualProblem::new(d, cs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut point = || {
            let z = problem.zero_point();
            DualPoint {
                y: z.y.iter().map(|_| rng.gen_range(-2.0..2.0)).collect(),
                z_lower: z.z_lower.iter().map(|_| rng.gen_range(0.0..2.0)).collect(),
                z_upper: z.z_upper.iter().map(|_| rng.gen_range(0.0..2.0)).collect(),
            }
        };
        let (a, b) = (point(), point());
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| t * p + (1.0 - t) * q).collect::<Vec<_>>();
        let mid = DualPoint {
            y: mix(&a.y, &b.y),
            z_lower: mix(&a.z_lower, &b.z_lower),
            z_upper: mix(&a.z_upper, &b.z_upper),
        };
        let chord = t * problem.objective(&a).unwrap() + (1.0 - t) * problem.objective(&b).unwrap();
        prop_assert!(problem.objective(&mid).unwrap() <= chord + 1e-9);
    }

    #[test]
    fn tt_normalization_is_scale_free(seed in any::<u64>(), d in 2usize..5, scale in 1.0f64..1e6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_state(d, true, &mut rng);
        let tables = simulate(&rho, SettingPlan::CorrelatedBins, &XY_PHASES).unwrap();
        let counts = |s: f64| {
            let tt = tables.tt.map(|x| x * s);
            let ss: Vec<_> = tables.ss.iter().map(|(k, o)| {
                (*k, TsupOutcomes(o.0.map(|r| r.map(|x| x.map(|y| y * s)))))
            }).collect();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            write_tt(&tt, &mut a).unwrap();
            write_ss(&ss, &mut b).unwrap();
            read_tables(a.as_slice(), Some(b.as_slice())).unwrap()
        };
        let loaded = counts(scale);
        prop_assert!((loaded.tables.tt.sum() - 1.0).abs() < 1e-12);
        prop_assert!((loaded.tt_total / scale - tables.tt.sum()).abs() < 1e-9);
        prop_assert!((&loaded.tables.tt - &tables.tt).amax() < 1e-12);
        let h = cond_entropy_xy(&loaded.tables.tt).unwrap();
        prop_assert!(h >= -1e-12 && h <= (d as f64).log2() + 1e-12);
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn dual_bound_dominates_primal_samples(seed in any::<u64>(), d in 2usize..4, real in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_state(d, real, &mut rng);
        let cfg = PipelineConfig {
            plan: SettingPlan::AllPairs,
            ..Default::default()
        };
        let report = full_pipeline(&Source::State(rho.clone()), &cfg).unwrap();
        prop_assert!(report.certificate_passed);
        let check = sandwich_check(report.p_guess_ub, &rho, 40, seed).unwrap();
        prop_assert!(check.passed(), "{check:?}");
    }

    #[test]
    fn rate_reports_satisfy_invariants(d in 2usize..9, v in 0.0f64..=1.0, blocked in any::<bool>()) {
        let cfg = PipelineConfig {
            block_size: (blocked && d % 2 == 0).then_some(2),
            ..PipelineConfig::with_witness(WitnessConfig::default())
        };
        let tables = simulate_model(&NoiseModelSpec::new(d, v).unwrap(), cfg.plan, &XY_PHASES).unwrap();
        let r = rate_from_tables(&tables, &cfg, Some(v)).unwrap();
        prop_assert!(r.invariant_violations().is_empty());
        prop_assert!(r.clamped_rate >= 0.0 && r.clamped_rate <= (d as f64).log2() + 1e-9);
        prop_assert!(r.p_guess_ub > 0.0 && r.p_guess_ub <= 1.0 + 1e-9);
        prop_assert!(r.certificate_passed);
    }

    #[test]
    fn minimize_is_deterministic(d in 2usize..6, v in 0.5f64..=1.0, seed in 0u64..4) {
        let tables = simulate_model(&NoiseModelSpec::new(d, v).unwrap(), SettingPlan::CorrelatedBins, &XY_PHASES).unwrap();
        let ex = extract(&tables).unwrap();
        let (band, off) = khexp_preset(d, 0.75, 4.0).unwrap();
        let cs = pair_constraints(&band, &off, &tables.tt, &ex, 64, &mut vec![]).unwrap();
        let problem = DualProblem::new(d, cs).unwrap();
        let opts = DualOptions { seed, ..Default::default() };
        let a = problem.minimize(&opts).unwrap();
        let b = problem.minimize(&opts).unwrap();
        prop_assert_eq!(a.p_guess_ub.to_bits(), b.p_guess_ub.to_bits());
        prop_assert_eq!(a.point, b.point);
    }
}

#[test]
fn unknown_entries_stay_unknown_without_pivots() {
    let r = PartialRealSymmetric::from_diagonal(&[1.0, 1.0, 1.0]).unwrap();
    let (done, _) = complete(&r, 4).unwrap();
    assert_eq!(done.get(0, 2), Entry::Unknown);
}
