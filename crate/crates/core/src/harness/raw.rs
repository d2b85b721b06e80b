//! Raw per-rep CSV rows.
//!
//! One row per `(rep, arm)` with `is_chosen = 0`, then for uncensored reps
//! one extra row repeating the chosen arm with `is_chosen = 1`. Arms are
//! 1-based. Undefined values are empty fields. Floats carry 17 significant
//! digits, so parsing a row recovers the exact `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimators::{ArmRecord, RepRecord};

pub const RAW_HEADER: [&str; 10] = [
    "scenario",
    "rep",
    "arm",
    "is_chosen",
    "N",
    "stop_time",
    "mean_hat",
    "mu_true",
    "diff",
    "censored",
];

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

pub fn write_raw(path: &Path, scenario: &str, records: &[RepRecord]) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(RAW_HEADER).map_err(csv_err)?;
    for r in records {
        let stop = r.stop_time.map(|t| t.to_string()).unwrap_or_default();
        let censored = if r.is_censored() { "1" } else { "0" };
        let mut row = |k: usize, chosen: &str| {
            let a = &r.arms[k];
            w.write_record([
                scenario,
                &r.rep.to_string(),
                &(k + 1).to_string(),
                chosen,
                &a.count.to_string(),
                &stop,
                &opt_float(a.mean_hat),
                &float(a.mu),
                &opt_float(a.diff()),
                censored,
            ])
        };
        for k in 0..r.arms.len() {
            row(k, "0").map_err(csv_err)?;
        }
        if let (Some(k), false) = (r.chosen, r.is_censored()) {
            row(k, "1").map_err(csv_err)?;
        }
    }
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(io)
}

struct Row {
    line: u64,
    scenario: String,
    rep: u64,
    arm: usize,
    is_chosen: bool,
    count: u64,
    stop_time: Option<u64>,
    mean_hat: Option<f64>,
    mu: f64,
    censored: bool,
}

fn parse_row(rec: &csv::StringRecord, line: u64) -> Result<Row> {
    let err = |col: &str, msg: String| Error::Parse {
        line,
        message: format!("column `{col}`: {msg}"),
    };
    if rec.len() != RAW_HEADER.len() {
        return Err(Error::Parse {
            line,
            message: format!("expected {} fields, found {}", RAW_HEADER.len(), rec.len()),
        });
    }
    let field = |i: usize| &rec[i];
    let int = |i: usize| {
        field(i)
            .parse::<u64>()
            .map_err(|e| err(RAW_HEADER[i], format!("{e} in {:?}", field(i))))
    };
    let opt = |i: usize| Some(field(i)).filter(|s| !s.is_empty());
    let real = |i: usize, s: &str| {
        s.parse::<f64>()
            .map_err(|e| err(RAW_HEADER[i], format!("{e} in {s:?}")))
    };
    let flag = |i: usize| match field(i) {
        "0" => Ok(false),
        "1" => Ok(true),
        s => Err(err(RAW_HEADER[i], format!("expected 0 or 1, got {s:?}"))),
    };
    let arm = int(2)?;
    if arm == 0 {
        return Err(err("arm", "arms are numbered from 1".into()));
    }
    let mean_hat = opt(6).map(|s| real(6, s)).transpose()?;
    let stop_time = opt(5).map(|s| {
        s.parse::<u64>()
            .map_err(|e| err("stop_time", format!("{e} in {s:?}")))
    });
    Ok(Row {
        line,
        scenario: field(0).to_owned(),
        rep: int(1)?,
        arm: (arm - 1) as usize,
        is_chosen: flag(3)?,
        count: int(4)?,
        stop_time: stop_time.transpose()?,
        mean_hat,
        mu: real(7, field(7))?,
        censored: flag(9)?,
    })
}

/// Reads a raw CSV back into rep records, checking the row layout.
pub fn read_raw(path: &Path) -> Result<(String, Vec<RepRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::NoData(format!("{} is empty", path.display()))),
        Some(h) => h.map_err(|e| csv_parse_error(e, 1))?,
    };
    if header.iter().ne(RAW_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be `{}`", RAW_HEADER.join(",")),
        });
    }

    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| csv_parse_error(e, line))?;
        rows.push(parse_row(&rec, line)?);
    }
    if rows.is_empty() {
        return Err(Error::NoData(format!("{} has no rows", path.display())));
    }
    let scenario = rows[0].scenario.clone();
    let mut out: Vec<RepRecord> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let first = &rows[i];
        let rep = first.rep;
        let mut arms = Vec::new();
        let mut chosen = None;
        let mut j = i;
        while j < rows.len() && rows[j].rep == rep {
            let r = &rows[j];
            let bad = |message: String| Error::Parse { line: r.line, message };
            if r.scenario != scenario {
                return Err(bad(format!("scenario {:?} differs from {scenario:?}", r.scenario)));
            }
            if r.censored != first.censored || r.stop_time != first.stop_time {
                return Err(bad("stop_time/censored disagree within a rep".into()));
            }
            if r.censored == r.stop_time.is_some() {
                return Err(bad("a rep is censored exactly when stop_time is empty".into()));
            }
            if r.mean_hat.is_some() != (r.count > 0) {
                return Err(bad("mean_hat must be present exactly when N > 0".into()));
            }
            let record = ArmRecord {
                count: r.count,
                mean_hat: r.mean_hat,
                mu: r.mu,
            };
            if r.is_chosen {
                if chosen.is_some() || r.censored {
                    return Err(bad("unexpected chosen row".into()));
                }
                if arms.get(r.arm) != Some(&record) {
                    return Err(bad("chosen row does not match its arm row".into()));
                }
                chosen = Some(r.arm);
            } else {
                if chosen.is_some() || r.arm != arms.len() {
                    return Err(bad(format!("expected arm {}", arms.len() + 1)));
                }
                arms.push(record);
            }
            j += 1;
        }
        if let Some(prev) = out.last() {
            if prev.arms.len() != arms.len() {
                return Err(Error::Parse {
                    line: first.line,
                    message: "reps disagree on the number of arms".into(),
                });
            }
        }
        out.push(RepRecord {
            rep,
            stop_time: first.stop_time,
            chosen,
            arms,
        });
        i = j;
    }
    Ok((scenario, out))
}

fn csv_parse_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
