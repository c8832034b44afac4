//! Result files: rates CSV, thresholds CSV, JSON metadata and a plot script.

use std::fs;
use std::path::{Path, PathBuf};

use hdqkd::keyrate::RateReport;
use hdqkd::{Error, Result};
use serde::Serialize;

pub const RESULTS_FILE: &str = "results.csv";
pub const THRESHOLDS_FILE: &str = "thresholds.csv";
pub const METADATA_FILE: &str = "metadata.json";
pub const PLOT_FILE: &str = "plot_rates.py";

#[derive(Debug, Serialize)]
struct ResultRow<'a> {
    d: usize,
    #[serde(rename = "D")]
    block: Option<usize>,
    v: Option<f64>,
    preset: &'a str,
    p_guess_ub: f64,
    hmin_bits: f64,
    leak_bits: f64,
    rate_bits: f64,
    clamped_rate: f64,
    wallclock_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    pub preset: String,
    pub d: usize,
    #[serde(rename = "D")]
    pub block: Option<usize>,
    pub threshold_v: Option<f64>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_results(dir: &Path, reports: &[RateReport], timing: bool) -> Result<PathBuf> {
    let path = dir.join(RESULTS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    for r in reports {
        w.serialize(ResultRow {
            d: r.dim,
            block: r.block_size,
            v: r.visibility,
            preset: &r.preset,
            p_guess_ub: r.p_guess_ub,
            hmin_bits: r.hmin_bits,
            leak_bits: r.leak_bits,
            rate_bits: r.rate_bits,
            clamped_rate: r.clamped_rate,
            wallclock_ms: if timing { r.wallclock_ms } else { 0.0 },
        })
        .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn write_thresholds(dir: &Path, rows: &[ThresholdRow]) -> Result<PathBuf> {
    let path = dir.join(THRESHOLDS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Matplotlib script plotting clamped rate against visibility, one curve
/// per preset, dimension and subspace size.
pub fn plot_script() -> &'static str {
    r#"#!/usr/bin/env python3
"""Key rate versus visibility from results.csv (run from the output directory)."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

curves = defaultdict(list)
with open("results.csv") as f:
    for row in csv.DictReader(f):
        if not row["v"]:
            continue
        label = f'{row["preset"]}, d={row["d"]}' + (f', D={row["D"]}' if row["D"] else "")
        curves[label].append((float(row["v"]), float(row["clamped_rate"])))

fig, ax = plt.subplots(figsize=(6, 4))
for label, points in curves.items():
    points.sort()
    ax.plot([p[0] for p in points], [p[1] for p in points], marker=".", label=label)
ax.set_xlabel("visibility v")
ax.set_ylabel("key rate (bits per round)")
ax.set_ylim(bottom=0)
ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig("rates.pdf")
print("wrote rates.pdf")
"#
}
