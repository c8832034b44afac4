//! CSV ingestion and emission of click tables.
//!
//! TT files have the header `i,j,value`, one row per bin pair. SS files have
//! `a,b,i,j,phiA,phiB,value`, one row per outcome. Values may be raw counts:
//! TT is normalized to unit total; each complete SS setting is normalized so
//! its four outcomes add up to the (normalized) TT mass of its bin block.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{ClickTables, TsupOutcomes, TsupSetting};

pub const TT_HEADER: [&str; 3] = ["i", "j", "value"];
pub const SS_HEADER: [&str; 7] = ["a", "b", "i", "j", "phiA", "phiB", "value"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadedTables {
    #[serde(skip)]
    pub tables: ClickTables,
    /// Sum of the raw TT values before normalization.
    pub tt_total: f64,
    pub normalization: &'static str,
    pub warnings: Vec<String>,
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input)
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

/// Reads all records and checks the header row.
fn records<R: Read>(input: R, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut rows = reader(input).into_records();
    let first = match rows.next() {
        Some(r) => r.map_err(csv_error)?,
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty file, expected a header".into(),
            })
        }
    };
    let found: Vec<&str> = first.iter().collect();
    if found != header {
        return Err(Error::Parse {
            line: line_of(&first),
            msg: format!("expected header {:?}, found {:?}", header.join(","), found.join(",")),
        });
    }
    let mut out = Vec::new();
    for r in rows {
        let r = r.map_err(csv_error)?;
        if r.len() != header.len() {
            return Err(Error::Parse {
                line: line_of(&r),
                msg: format!("expected {} fields, found {}", header.len(), r.len()),
            });
        }
        out.push(r);
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, k: usize, name: &str) -> Result<T> {
    record[k].parse().map_err(|_| Error::Parse {
        line: line_of(record),
        msg: format!("cannot parse {name} from {:?}", &record[k]),
    })
}

fn count(record: &csv::StringRecord, k: usize) -> Result<f64> {
    let v: f64 = field(record, k, "value")?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Data(format!(
            "line {}: negative or non-finite count {v}",
            line_of(record)
        )));
    }
    Ok(v)
}

/// Raw TT values; every `(i, j)` in `0..d x 0..d` must appear exactly once.
pub fn read_tt<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let rows = records(input, &TT_HEADER)?;
    let mut cells = Vec::with_capacity(rows.len());
    for r in &rows {
        let i: usize = field(r, 0, "i")?;
        let j: usize = field(r, 1, "j")?;
        cells.push((i, j, count(r, 2)?, line_of(r)));
    }
    let d = cells.iter().map(|c| c.0.max(c.1) + 1).max().unwrap_or(0);
    if d < 2 {
        return Err(Error::Data("TT table needs at least two bins".into()));
    }
    let mut tt = DMatrix::from_element(d, d, f64::NAN);
    for (i, j, v, line) in cells {
        if !tt[(i, j)].is_nan() {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate TT cell ({i}, {j})"),
            });
        }
        tt[(i, j)] = v;
    }
    if let Some(k) = tt.iter().position(|x| x.is_nan()) {
        return Err(Error::Data(format!("TT cell ({}, {}) missing", k % d, k / d)));
    }
    Ok(tt)
}

/// Raw SS outcomes grouped by setting, in first-appearance order.
pub fn read_ss<R: Read>(input: R) -> Result<Vec<(TsupSetting, TsupOutcomes)>> {
    let rows = records(input, &SS_HEADER)?;
    let mut out: Vec<(TsupSetting, TsupOutcomes)> = Vec::new();
    for r in &rows {
        let a: u8 = field(r, 0, "a")?;
        let b: u8 = field(r, 1, "b")?;
        if !(1..=2).contains(&a) || !(1..=2).contains(&b) {
            return Err(Error::Parse {
                line: line_of(r),
                msg: format!("detector labels must be 1 or 2, found ({a}, {b})"),
            });
        }
        let setting = TsupSetting::new(
            field(r, 2, "i")?,
            field(r, 3, "j")?,
            field(r, 4, "phiA")?,
            field(r, 5, "phiB")?,
        );
        let value = count(r, 6)?;
        let slot = match out.iter().position(|(s, _)| s.same_as(&setting)) {
            Some(k) => k,
            None => {
                out.push((setting, TsupOutcomes::default()));
                out.len() - 1
            }
        };
        if out[slot].1.get(a, b).is_some() {
            return Err(Error::Parse {
                line: line_of(r),
                msg: format!("duplicate outcome ({a}, {b}) for bins ({}, {})", setting.i, setting.j),
            });
        }
        out[slot].1.set(a, b, value);
    }
    Ok(out)
}

/// Normalizes raw TT and SS values into click tables.
pub fn normalize(tt_raw: DMatrix<f64>, ss_raw: Vec<(TsupSetting, TsupOutcomes)>) -> Result<LoadedTables> {
    let d = tt_raw.nrows();
    let tt_total: f64 = tt_raw.iter().sum();
    if !(tt_total > 0.0) {
        return Err(Error::Data("TT table has no counts".into()));
    }
    let tt = tt_raw.unscale(tt_total);
    let mut warnings = Vec::new();
    let mut ss = Vec::with_capacity(ss_raw.len());
    for (s, mut o) in ss_raw {
        if s.i == 0 || s.j == 0 || s.i >= d || s.j >= d {
            return Err(Error::MalformedTable(format!(
                "SS bins ({}, {}) outside 1..{d}",
                s.i, s.j
            )));
        }
        let mass = tt[(s.i, s.j)] + tt[(s.i, s.j - 1)] + tt[(s.i - 1, s.j)] + tt[(s.i - 1, s.j - 1)];
        let complete = o.0.iter().flatten().all(Option::is_some);
        let total = o.total();
        let scale = if complete && total > 0.0 {
            mass / total
        } else {
            warnings.push(format!(
                "SS setting ({}, {}, {}, {}) is incomplete; scaled by the TT total",
                s.i, s.j, s.phi_a, s.phi_b
            ));
            1.0 / tt_total
        };
        for row in o.0.iter_mut() {
            for x in row.iter_mut().flatten() {
                *x *= scale;
            }
        }
        ss.push((s, o));
    }
    Ok(LoadedTables {
        tables: ClickTables { dim: d, tt, ss },
        tt_total,
        normalization: "tt: global; ss: per setting, scaled to the TT block mass",
        warnings,
    })
}

pub fn read_tables<R1: Read, R2: Read>(tt: R1, ss: Option<R2>) -> Result<LoadedTables> {
    let tt_raw = read_tt(tt)?;
    let ss_raw = match ss {
        Some(r) => read_ss(r)?,
        None => vec![],
    };
    normalize(tt_raw, ss_raw)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Loads a TT file and an optional SS file.
pub fn load_click_csv(tt_path: &Path, ss_path: Option<&Path>) -> Result<LoadedTables> {
    let ss = ss_path.map(open).transpose()?;
    read_tables(open(tt_path)?, ss)
}

fn write_err(e: impl std::fmt::Display) -> Error {
    Error::Data(format!("write failed: {e}"))
}

pub fn write_tt<W: Write>(tt: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TT_HEADER).map_err(write_err)?;
    for i in 0..tt.nrows() {
        for j in 0..tt.ncols() {
            w.write_record([i.to_string(), j.to_string(), format!("{:e}", tt[(i, j)])])
                .map_err(write_err)?;
        }
    }
    w.flush().map_err(write_err)
}

pub fn write_ss<W: Write>(ss: &[(TsupSetting, TsupOutcomes)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SS_HEADER).map_err(write_err)?;
    for (s, o) in ss {
        for a in 1..=2u8 {
            for b in 1..=2u8 {
                if let Some(v) = o.get(a, b) {
                    w.write_record([
                        a.to_string(),
                        b.to_string(),
                        s.i.to_string(),
                        s.j.to_string(),
                        format!("{:e}", s.phi_a),
                        format!("{:e}", s.phi_b),
                        format!("{v:e}"),
                    ])
                    .map_err(write_err)?;
                }
            }
        }
    }
    w.flush().map_err(write_err)
}
