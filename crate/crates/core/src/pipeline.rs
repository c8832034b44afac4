//! End-to-end rate evaluation: click tables, extraction, completion, witness
//! constraints, dual bound, key rate.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{DualOptions, DualProblem, GuessBound};
use crate::error::{Error, Result, StageExt};
use crate::keyrate::{cond_entropy_xy, devetak_winter, subspace_rate, RateReport, SubspaceRate};
use crate::measurement::{extract, simulate, simulate_model, ClickTables, SettingPlan, XY_PHASES};
use crate::optimize::NelderMeadOptions;
use crate::states::{DensityMatrix, NoiseModelSpec, SubspacePartition};
use crate::witness::{pair_constraints, WitnessConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub witness: WitnessConfig,
    /// Contiguous subspaces of this size.
    pub block_size: Option<usize>,
    /// Explicit subspaces; takes precedence over `block_size`.
    pub blocks: Option<Vec<Vec<usize>>>,
    pub plan: SettingPlan,
    pub completion_passes: usize,
    pub seed: u64,
    pub starts: usize,
    pub max_evals: usize,
    pub fast_path: bool,
    pub verify: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            witness: WitnessConfig::default(),
            block_size: None,
            blocks: None,
            plan: SettingPlan::CorrelatedBins,
            completion_passes: 512,
            seed: 0,
            starts: 8,
            max_evals: 2000,
            fast_path: true,
            verify: true,
        }
    }
}

impl PipelineConfig {
    pub fn with_witness(witness: WitnessConfig) -> Self {
        PipelineConfig {
            witness,
            ..Default::default()
        }
    }

    pub fn dual_options(&self) -> DualOptions {
        DualOptions {
            starts: self.starts,
            seed: self.seed,
            nelder_mead: NelderMeadOptions {
                max_evals: self.max_evals,
                ..Default::default()
            },
            fast_path: self.fast_path,
            ..Default::default()
        }
    }

    /// The subspace partition for local dimension `d`, if any.
    pub fn partition(&self, d: usize) -> Result<Option<SubspacePartition>> {
        match (&self.blocks, self.block_size) {
            (Some(blocks), _) => SubspacePartition::from_blocks(d, blocks.clone()).map(Some),
            (None, Some(size)) => SubspacePartition::contiguous(d, size).map(Some),
            (None, None) => Ok(None),
        }
    }
}

/// Where the click statistics come from.
#[derive(Debug, Clone)]
pub enum Source {
    Model(NoiseModelSpec),
    State(DensityMatrix),
    Tables(ClickTables),
}

impl Source {
    pub fn dim(&self) -> usize {
        match self {
            Source::Model(m) => m.dim,
            Source::State(s) => s.dim(),
            Source::Tables(t) => t.dim,
        }
    }

    pub fn tables(&self, plan: SettingPlan) -> Result<ClickTables> {
        match self {
            Source::Model(m) => simulate_model(m, plan, &XY_PHASES),
            Source::State(s) => simulate(s, plan, &XY_PHASES),
            Source::Tables(t) => Ok(t.clone()),
        }
    }
}

/// Bound, leakage and bookkeeping for one (sub)space.
#[derive(Debug, Clone)]
pub struct BlockOutcome {
    pub bound: GuessBound,
    pub leak_bits: f64,
    pub certificate_passed: bool,
    pub warnings: Vec<String>,
}

/// Everything downstream of the click tables for a single space.
pub fn evaluate_tables(tables: &ClickTables, config: &PipelineConfig) -> Result<BlockOutcome> {
    let d = tables.dim;
    let extracted = extract(tables).stage("extract")?;
    let mut warnings = extracted.warnings.clone();
    let (band, off, witness_warnings) = config.witness.build(d).stage("witness")?;
    warnings.extend(witness_warnings);
    let constraints = pair_constraints(
        &band,
        &off,
        &tables.tt,
        &extracted,
        config.completion_passes,
        &mut warnings,
    )
    .stage("completion")?;
    let problem = DualProblem::new(d, constraints).stage("dual")?;
    let bound = problem.minimize(&config.dual_options()).stage("dual")?;
    let certificate_passed = if config.verify {
        let report = problem.verify(&bound).stage("certificate")?;
        warnings.extend(report.messages.iter().map(|m| format!("certificate: {m}")));
        report.passed
    } else {
        true
    };
    let leak_bits = cond_entropy_xy(&tables.tt).stage("keyrate")?;
    Ok(BlockOutcome {
        bound,
        leak_bits,
        certificate_passed,
        warnings,
    })
}

/// Rate from click tables, optionally split into subspaces.
pub fn rate_from_tables(
    tables: &ClickTables,
    config: &PipelineConfig,
    visibility: Option<f64>,
) -> Result<RateReport> {
    let start = Instant::now();
    let d = tables.dim;
    let partition = config.partition(d).stage("config")?;
    let mut report = RateReport {
        dim: d,
        block_size: partition.as_ref().map(|p| p.block_size()),
        visibility,
        preset: config.witness.label(),
        p_guess_ub: 1.0,
        hmin_bits: 0.0,
        leak_bits: 0.0,
        rate_bits: 0.0,
        clamped_rate: 0.0,
        subspaces: vec![],
        certificate_passed: true,
        warnings: vec![],
        seed: config.seed,
        wallclock_ms: 0.0,
    };
    match partition {
        None => {
            let out = evaluate_tables(tables, config)?;
            let (rate, clamped) =
                devetak_winter(out.bound.p_guess_ub, out.leak_bits).stage("keyrate")?;
            report.p_guess_ub = out.bound.p_guess_ub;
            report.hmin_bits = -out.bound.p_guess_ub.log2();
            report.leak_bits = out.leak_bits;
            report.rate_bits = rate;
            report.clamped_rate = clamped;
            report.certificate_passed = out.certificate_passed;
            report.warnings = out.warnings;
        }
        Some(partition) => {
            let parts: Vec<(Vec<usize>, f64, BlockOutcome)> = partition
                .blocks()
                .par_iter()
                .map(|block| {
                    let (weight, sub) = tables.restrict(block).stage("subspace")?;
                    let out = evaluate_tables(&sub, config)?;
                    Ok((block.clone(), weight, out))
                })
                .collect::<Result<_>>()?;
            for (block, weight, out) in parts {
                let hmin = -out.bound.p_guess_ub.log2();
                report.subspaces.push(SubspaceRate {
                    block: block.clone(),
                    weight,
                    p_guess_ub: out.bound.p_guess_ub,
                    hmin_bits: hmin,
                    leak_bits: out.leak_bits,
                    rate_bits: hmin - out.leak_bits,
                });
                report.certificate_passed &= out.certificate_passed;
                report
                    .warnings
                    .extend(out.warnings.into_iter().map(|w| format!("block {block:?}: {w}")));
            }
            let (clamped, unclamped) = subspace_rate(&report.subspaces).stage("keyrate")?;
            report.hmin_bits = report.subspaces.iter().map(|s| s.weight * s.hmin_bits).sum();
            report.leak_bits = report.subspaces.iter().map(|s| s.weight * s.leak_bits).sum();
            report.p_guess_ub = 2f64.powf(-report.hmin_bits);
            report.rate_bits = unclamped;
            report.clamped_rate = clamped;
        }
    }
    report.warnings.dedup();
    report.wallclock_ms = start.elapsed().as_secs_f64() * 1e3;
    let violations = report.invariant_violations();
    if !violations.is_empty() {
        return Err(Error::Invariant(violations.join("; ")));
    }
    Ok(report)
}

/// Simulate (or take) click tables and evaluate the rate.
pub fn full_pipeline(source: &Source, config: &PipelineConfig) -> Result<RateReport> {
    let tables = source.tables(config.plan).stage("simulate")?;
    let visibility = match source {
        Source::Model(m) => Some(m.visibility),
        _ => None,
    };
    rate_from_tables(&tables, config, visibility)
}

/// Rates of the isotropic model at each visibility, in input order.
pub fn sweep(d: usize, visibilities: &[f64], config: &PipelineConfig) -> Result<Vec<RateReport>> {
    visibilities
        .par_iter()
        .map(|&v| {
            let model = NoiseModelSpec::new(d, v).stage("config")?;
            full_pipeline(&Source::Model(model), config)
        })
        .collect()
}

/// Smallest visibility in `[lo, hi]` with a positive (clamped) rate, to
/// within `tol`, by bisection. `None` if even `hi` gives no key.
pub fn threshold_visibility(
    d: usize,
    config: &PipelineConfig,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<Option<f64>> {
    if !(lo < hi && tol > 0.0) {
        return Err(Error::Config(format!("bad threshold bracket [{lo}, {hi}] / {tol}")));
    }
    let positive = |v: f64| -> Result<bool> {
        let model = NoiseModelSpec::new(d, v).stage("config")?;
        Ok(full_pipeline(&Source::Model(model), config)?.clamped_rate > 0.0)
    };
    if !positive(hi)? {
        return Ok(None);
    }
    if positive(lo)? {
        return Ok(Some(lo));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if positive(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::isotropic;
    use crate::witness::PresetName;

    #[test]
    fn model_and_state_sources_agree() {
        let config = PipelineConfig::default();
        let a = full_pipeline(&Source::Model(NoiseModelSpec::new(4, 0.95).unwrap()), &config).unwrap();
        let b = full_pipeline(&Source::State(isotropic(4, 0.95).unwrap()), &config).unwrap();
        assert!((a.p_guess_ub - b.p_guess_ub).abs() < 1e-10);
        assert!((a.leak_bits - b.leak_bits).abs() < 1e-12);
        assert!(a.certificate_passed);
    }

    #[test]
    fn errors_carry_stage() {
        let config = PipelineConfig::with_witness(WitnessConfig::preset(PresetName::Kh2));
        let err = full_pipeline(&Source::Model(NoiseModelSpec::new(8, 0.9).unwrap()), &config).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "witness", .. }));
        assert!(matches!(err.root(), Error::PresetDimension { .. }));
    }

    #[test]
    fn subspace_weights_and_sums() {
        let config = PipelineConfig {
            block_size: Some(2),
            ..Default::default()
        };
        let r = full_pipeline(&Source::Model(NoiseModelSpec::new(8, 0.9).unwrap()), &config).unwrap();
        assert_eq!(r.subspaces.len(), 4);
        let total: f64 = r.subspaces.iter().map(|s| s.weight).sum();
        // 4 blocks of 4 cells: v/d on the correlated cells plus (1-v)/d^2 noise
        let expect = 4.0 * (2.0 * 0.9 / 8.0 + 4.0 * 0.1 / 64.0);
        assert!((total - expect).abs() < 1e-14);
        assert!(r.invariant_violations().is_empty());
    }

    #[test]
    fn pure_state_two_dimensional_blocks_are_tight() {
        // with D = 2 the witnesses pin the conditional state, so each
        // subspace yields exactly one bit
        for d in [4, 8] {
            let config = PipelineConfig {
                block_size: Some(2),
                ..Default::default()
            };
            let r = full_pipeline(&Source::Model(NoiseModelSpec::new(d, 1.0).unwrap()), &config).unwrap();
            let weights: f64 = r.subspaces.iter().map(|s| s.weight).sum();
            assert!((r.clamped_rate - weights).abs() < 1e-6, "{r:?}");
        }
    }
}
