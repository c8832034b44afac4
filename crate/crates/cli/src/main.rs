mod config;
mod output;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hdqkd::clickfile::load_click_csv;
use hdqkd::completion::{complete, PartialRealSymmetric};
use hdqkd::keyrate::RateReport;
use hdqkd::oracle::sandwich_check;
use hdqkd::pipeline::{full_pipeline, rate_from_tables, sweep, threshold_visibility, Source};
use hdqkd::states::isotropic;
use hdqkd::witness::{PresetName, WitnessConfig};
use hdqkd::{Error, Result};
use serde::{Deserialize, Serialize};

use config::RunConfig;
use output::ThresholdRow;

#[derive(Debug, Parser)]
#[command(name = "hdqkd", version, about = "Key-rate bounds for high-dimensional time-bin QKD")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write zero wall-clock times so that output is byte-stable.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rate curves for the isotropic noise model.
    Simulate(SimulateArgs),
    /// Rate from measured TT/SS click counts.
    Rate(RateArgs),
    /// Compare dual bounds against random primal points.
    Oracle(OracleArgs),
    /// Interval completion of a partially known correlation matrix.
    Completion(CompletionArgs),
}

#[derive(Debug, Args, Default)]
struct WitnessArgs {
    /// Witness preset (kh1, kh2, khexp); repeat for several curves.
    #[arg(long = "preset")]
    presets: Vec<String>,
    /// Value(s) of the unspecified KH1 coefficient q1.
    #[arg(long = "q1")]
    q1: Vec<f64>,
    /// Decay rate of the exponential preset.
    #[arg(long)]
    c: Option<f64>,
    /// Offset of the exponential preset.
    #[arg(long)]
    s: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct PartitionArgs {
    /// Post-select on contiguous subspaces of this size.
    #[arg(long)]
    block_size: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Local dimension; repeat for several.
    #[arg(long = "d")]
    dims: Vec<usize>,
    #[arg(long)]
    v_start: Option<f64>,
    #[arg(long)]
    v_stop: Option<f64>,
    #[arg(long)]
    v_steps: Option<usize>,
    /// Also locate the smallest visibility with positive rate.
    #[arg(long)]
    threshold: bool,
    #[arg(long)]
    no_plot: bool,
    #[command(flatten)]
    witness: WitnessArgs,
    #[command(flatten)]
    partition: PartitionArgs,
}

#[derive(Debug, Args)]
struct RateArgs {
    #[arg(long)]
    tt: Option<PathBuf>,
    #[arg(long)]
    ss: Option<PathBuf>,
    #[command(flatten)]
    witness: WitnessArgs,
    #[command(flatten)]
    partition: PartitionArgs,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long = "d")]
    dims: Vec<usize>,
    /// Visibility; repeat for several.
    #[arg(long = "v")]
    visibilities: Vec<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    witness: WitnessArgs,
}

#[derive(Debug, Args)]
struct CompletionArgs {
    /// JSON file with `diag`, `known` ([j, l, value]) and `intervals`
    /// ([j, l, lo, hi]).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    max_passes: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_)
        | Error::InvalidDimension(_)
        | Error::Domain { .. }
        | Error::PresetDimension { .. } => 1,
        Error::Parse { .. }
        | Error::Data(_)
        | Error::MalformedTable(_)
        | Error::IncompleteSetting(_)
        | Error::EmptySubspace(_)
        | Error::Inconsistent { .. }
        | Error::Index(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.optimizer.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    if cli.no_timing {
        cfg.timing = false;
    }
    Ok(cfg)
}

fn apply_witness(cfg: &mut RunConfig, args: &WitnessArgs) -> Result<()> {
    if !args.presets.is_empty() {
        cfg.witnesses = args
            .presets
            .iter()
            .map(|p| p.parse::<PresetName>().map(WitnessConfig::preset))
            .collect::<Result<_>>()?;
    }
    for w in &mut cfg.witnesses {
        if let Some(c) = args.c {
            w.c = c;
        }
        if let Some(s) = args.s {
            w.s = s;
        }
    }
    if !args.q1.is_empty() {
        let mut expanded = Vec::new();
        for w in &cfg.witnesses {
            if w.preset == PresetName::Kh1 {
                for &q1 in &args.q1 {
                    expanded.push(w.clone().with_override(1, q1));
                }
            } else {
                expanded.push(w.clone());
            }
        }
        cfg.witnesses = expanded;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate(a) => {
            if !a.dims.is_empty() {
                cfg.dims = a.dims.clone();
            }
            if let Some(x) = a.v_start {
                cfg.sweep.start = x;
            }
            if let Some(x) = a.v_stop {
                cfg.sweep.stop = x;
            }
            if let Some(x) = a.v_steps {
                cfg.sweep.steps = x;
            }
            if a.threshold {
                cfg.threshold.enabled = true;
            }
            if a.no_plot {
                cfg.plot = false;
            }
            apply_witness(&mut cfg, &a.witness)?;
            if a.partition.block_size.is_some() {
                cfg.block_size = a.partition.block_size;
            }
        }
        Command::Rate(a) => {
            if a.tt.is_some() {
                cfg.tt = a.tt.clone();
            }
            if a.ss.is_some() {
                cfg.ss = a.ss.clone();
            }
            apply_witness(&mut cfg, &a.witness)?;
            if a.partition.block_size.is_some() {
                cfg.block_size = a.partition.block_size;
            }
        }
        Command::Oracle(a) => {
            if !a.dims.is_empty() {
                cfg.dims = a.dims.clone();
            }
            if let Some(n) = a.samples {
                cfg.samples = n;
            }
            apply_witness(&mut cfg, &a.witness)?;
        }
        Command::Completion(a) => {
            if a.input.is_some() {
                cfg.completion_input = a.input.clone();
            }
            if let Some(n) = a.max_passes {
                cfg.completion_passes = n;
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate(_) => run_simulate(&cfg),
        Command::Rate(_) => run_rate(&cfg),
        Command::Oracle(a) => run_oracle(&cfg, &a.visibilities),
        Command::Completion(_) => run_completion(&cfg),
    })
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    rows: usize,
    certificates_passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalization: Option<&'a str>,
    thresholds: &'a [ThresholdRow],
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_wallclock_ms: Option<f64>,
}

fn collect_warnings(reports: &[RateReport], extra: &[String]) -> Vec<String> {
    let set: BTreeSet<String> = reports
        .iter()
        .flat_map(|r| r.warnings.iter().cloned())
        .chain(extra.iter().cloned())
        .collect();
    set.into_iter().collect()
}

fn finish(
    cfg: &RunConfig,
    command: &'static str,
    reports: &[RateReport],
    thresholds: &[ThresholdRow],
    normalization: Option<&str>,
    extra_warnings: &[String],
    started: Instant,
) -> Result<u8> {
    let dir = &cfg.out;
    output::ensure_dir(dir)?;
    let results = output::write_results(dir, reports, cfg.timing)?;
    if !thresholds.is_empty() {
        output::write_thresholds(dir, thresholds)?;
    }
    if cfg.plot && command == "simulate" {
        output::write_text(&dir.join(output::PLOT_FILE), output::plot_script())?;
    }
    let certificates_passed = reports.iter().all(|r| r.certificate_passed);
    let meta = Metadata {
        tool: "hdqkd",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config: cfg,
        rows: reports.len(),
        certificates_passed,
        normalization,
        thresholds,
        warnings: collect_warnings(reports, extra_warnings),
        total_wallclock_ms: cfg.timing.then(|| started.elapsed().as_secs_f64() * 1e3),
    };
    output::write_json(&dir.join(output::METADATA_FILE), &meta)?;
    for w in &meta.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {} rows to {}", reports.len(), results.display());
    for t in thresholds {
        match t.threshold_v {
            Some(v) => println!("threshold {} d={}: v = {v}", t.preset, t.d),
            None => println!("threshold {} d={}: no positive rate", t.preset, t.d),
        }
    }
    if !certificates_passed {
        eprintln!("error: at least one dual certificate failed verification");
        return Ok(3);
    }
    Ok(0)
}

fn run_simulate(cfg: &RunConfig) -> Result<u8> {
    cfg.validate()?;
    let started = Instant::now();
    let visibilities = cfg.sweep.values();
    let mut reports = Vec::new();
    let mut thresholds = Vec::new();
    for witness in &cfg.witnesses {
        for &d in &cfg.dims {
            let pipeline = cfg.pipeline(witness);
            reports.extend(sweep(d, &visibilities, &pipeline)?);
            if cfg.threshold.enabled {
                let t = &cfg.threshold;
                thresholds.push(ThresholdRow {
                    preset: witness.label(),
                    d,
                    block: pipeline.partition(d)?.map(|p| p.block_size()),
                    threshold_v: threshold_visibility(d, &pipeline, t.lo, t.hi, t.tol)?,
                });
            }
        }
    }
    finish(cfg, "simulate", &reports, &thresholds, None, &[], started)
}

fn run_rate(cfg: &RunConfig) -> Result<u8> {
    let started = Instant::now();
    let tt = cfg
        .tt
        .as_deref()
        .ok_or_else(|| Error::Config("rate needs a TT file (--tt or \"tt\")".into()))?;
    let loaded = load_click_csv(tt, cfg.ss.as_deref())?;
    let mut reports = Vec::new();
    for witness in &cfg.witnesses {
        reports.push(rate_from_tables(&loaded.tables, &cfg.pipeline(witness), None)?);
    }
    finish(
        cfg,
        "rate",
        &reports,
        &[],
        Some(loaded.normalization),
        &loaded.warnings,
        started,
    )
}

#[derive(Debug, Serialize)]
struct OracleRow {
    d: usize,
    v: f64,
    preset: String,
    p_guess_ub: f64,
    best_sample: f64,
    gap: f64,
    samples: usize,
    violations: usize,
}

fn run_oracle(cfg: &RunConfig, explicit: &[f64]) -> Result<u8> {
    let visibilities = if explicit.is_empty() {
        cfg.validate()?;
        cfg.sweep.values()
    } else {
        if let Some(&bad) = explicit.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("visibility {bad} outside [0, 1]")));
        }
        explicit.to_vec()
    };
    let mut rows = Vec::new();
    for witness in &cfg.witnesses {
        let pipeline = cfg.pipeline(witness);
        for &d in &cfg.dims {
            for &v in &visibilities {
                let rho = isotropic(d, v)?;
                let report = full_pipeline(&Source::State(rho.clone()), &pipeline)?;
                let check = sandwich_check(report.p_guess_ub, &rho, cfg.samples, cfg.optimizer.seed)?;
                let status = if check.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{status} d={d} v={v} preset={} bound={:.9} best_sample={:.9} violations={}",
                    witness.label(),
                    report.p_guess_ub,
                    check.best_sample,
                    check.violations
                );
                rows.push(OracleRow {
                    d,
                    v,
                    preset: witness.label(),
                    p_guess_ub: report.p_guess_ub,
                    best_sample: check.best_sample,
                    gap: check.gap,
                    samples: check.samples,
                    violations: check.violations,
                });
            }
        }
    }
    output::ensure_dir(&cfg.out)?;
    let path = cfg.out.join("oracle.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Data(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    let violations: usize = rows.iter().map(|r| r.violations).sum();
    println!("{} points, {violations} violations", rows.len());
    Ok(if violations == 0 { 0 } else { 3 })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompletionInput {
    diag: Vec<f64>,
    #[serde(default)]
    known: Vec<(usize, usize, f64)>,
    #[serde(default)]
    intervals: Vec<(usize, usize, f64, f64)>,
}

#[derive(Debug, Serialize)]
struct CompletionEntry {
    j: usize,
    l: usize,
    lo: Option<f64>,
    hi: Option<f64>,
    status: &'static str,
}

#[derive(Debug, Serialize)]
struct CompletionOutput {
    passes: usize,
    converged: bool,
    entries: Vec<CompletionEntry>,
}

fn read_completion_input(path: &Path) -> Result<PartialRealSymmetric> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let input: CompletionInput =
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
    let mut r = PartialRealSymmetric::from_diagonal(&input.diag)?;
    for (j, l, x) in input.known {
        r.set_known(j, l, x)?;
    }
    for (j, l, lo, hi) in input.intervals {
        r.set_interval(j, l, lo, hi)?;
    }
    Ok(r)
}

fn run_completion(cfg: &RunConfig) -> Result<u8> {
    let path = cfg
        .completion_input
        .as_deref()
        .ok_or_else(|| Error::Config("completion needs --input".into()))?;
    let input = read_completion_input(path)?;
    let (done, report) = complete(&input, cfg.completion_passes)?;
    let n = done.dim();
    let mut entries = Vec::new();
    for j in 0..n {
        for l in (j + 1)..n {
            let e = done.get(j, l);
            let bounds = e.bounds();
            println!("r[{j},{l}] {}: {:?}", e.status(), bounds);
            entries.push(CompletionEntry {
                j,
                l,
                status: e.status(),
                lo: bounds.map(|b| b.0),
                hi: bounds.map(|b| b.1),
            });
        }
    }
    output::ensure_dir(&cfg.out)?;
    let path = cfg.out.join("completion.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Data(e.to_string()))?;
    for e in &entries {
        w.serialize(e).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    output::write_json(
        &cfg.out.join("completion.json"),
        &CompletionOutput {
            passes: report.passes,
            converged: report.converged,
            entries,
        },
    )?;
    Ok(0)
}
