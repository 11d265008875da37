//! Trace CSV format.
//!
//! ```text
//! t_ms,beam_id,snr_db
//! 0,0,12.5
//! 0,1,-inf
//! 6.25,0,12.25
//! ...
//! ```
//!
//! Long format, sorted by `t_ms` then `beam_id`, one row per `(t, beam)` cell
//! with no gaps. Times start at 0 on a uniform grid. `-inf` is allowed in
//! `snr_db`. Floats are written in shortest round-trip form, so a write/load
//! cycle reproduces every value exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::SnrTrace;
use crate::error::{Error, Result};

const HEADER: [&str; 3] = ["t_ms", "beam_id", "snr_db"];

pub fn trace_to_csv(trace: &SnrTrace) -> String {
    let mut out = String::with_capacity(trace.rows() * trace.n_beams() * 16 + 32);
    out.push_str("t_ms,beam_id,snr_db\n");
    for r in 0..trace.rows() {
        let t = r as f64 * trace.dt_ms();
        for (b, v) in trace.row(r).iter().enumerate() {
            writeln!(out, "{t},{b},{v}").unwrap();
        }
    }
    out
}

pub fn write_trace(trace: &SnrTrace, path: &Path) -> Result<()> {
    std::fs::write(path, trace_to_csv(trace)).map_err(|e| Error::io(path, e))
}

struct Loader {
    path: PathBuf,
}

impl Loader {
    fn err(&self, line: Option<u64>, column: Option<&str>, message: impl Into<String>) -> Error {
        Error::TraceFormat {
            path: self.path.clone(),
            line,
            column: column.map(str::to_owned),
            message: message.into(),
        }
    }
}

/// Loads a trace CSV. The run id is the file stem.
pub fn load_trace(path: &Path, expected_n_beams: usize) -> Result<SnrTrace> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let ld = Loader {
        path: path.to_path_buf(),
    };
    if expected_n_beams == 0 {
        return Err(ld.err(None, None, "expected beam count must be at least 1"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| ld.err(None, None, e.to_string()))?;
    let headers = reader.headers().map_err(|e| ld.err(Some(1), None, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(ld.err(
            Some(1),
            None,
            format!("expected header `{}`", HEADER.join(",")),
        ));
    }

    let mut samples = Vec::new();
    let mut row_times: Vec<f64> = Vec::new();
    let mut next_beam = 0usize;
    let mut last_line = 1;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line());
            ld.err(line, None, e.to_string())
        })?;
        let line = record.position().map_or(last_line + 1, |p| p.line());
        last_line = line;
        if record.len() != 3 {
            return Err(ld.err(Some(line), None, format!("expected 3 fields, found {}", record.len())));
        }
        let t: f64 = record[0]
            .trim()
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| ld.err(Some(line), Some("t_ms"), format!("cannot parse `{}`", &record[0])))?;
        let beam: usize = record[1]
            .trim()
            .parse()
            .map_err(|_| ld.err(Some(line), Some("beam_id"), format!("cannot parse `{}`", &record[1])))?;
        let snr: f64 = record[2]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| !v.is_nan() && *v != f64::INFINITY)
            .ok_or_else(|| ld.err(Some(line), Some("snr_db"), format!("cannot parse `{}`", &record[2])))?;

        if beam >= expected_n_beams {
            return Err(ld.err(
                Some(line),
                Some("beam_id"),
                format!("beam id {beam} out of range (trace has {expected_n_beams} beams)"),
            ));
        }
        if next_beam == 0 {
            check_row_time(&ld, line, &row_times, t)?;
            row_times.push(t);
        } else if t != *row_times.last().unwrap() {
            return Err(ld.err(
                Some(line),
                Some("beam_id"),
                format!(
                    "missing cell: t_ms={} has no beam {next_beam}",
                    row_times.last().unwrap()
                ),
            ));
        }
        if beam != next_beam {
            return Err(ld.err(
                Some(line),
                Some("beam_id"),
                format!("missing cell: t_ms={t} has no beam {next_beam} (found beam {beam})"),
            ));
        }
        samples.push(snr);
        next_beam = (next_beam + 1) % expected_n_beams;
    }
    if next_beam != 0 {
        return Err(ld.err(
            Some(last_line),
            Some("beam_id"),
            format!(
                "missing cell: t_ms={} has no beam {next_beam}",
                row_times.last().unwrap()
            ),
        ));
    }
    if row_times.len() < 2 {
        return Err(ld.err(None, None, "a trace needs at least 2 time samples"));
    }
    let dt = row_times.last().unwrap() / (row_times.len() - 1) as f64;
    let run_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SnrTrace::new(run_id, dt, expected_n_beams, samples).map_err(|e| ld.err(None, None, e.to_string()))
}

fn check_row_time(ld: &Loader, line: u64, prev: &[f64], t: f64) -> Result<()> {
    match prev {
        [] if t != 0.0 => Err(ld.err(Some(line), Some("t_ms"), format!("trace must start at t_ms=0, found {t}"))),
        [] => Ok(()),
        [t0] if t <= *t0 => Err(ld.err(Some(line), Some("t_ms"), format!("t_ms={t} is not increasing"))),
        [_] => Ok(()),
        [t0, t1, ..] => {
            let dt = t1 - t0;
            let expected = t0 + dt * prev.len() as f64;
            if (t - expected).abs() > 1e-6 * dt {
                Err(ld.err(
                    Some(line),
                    Some("t_ms"),
                    format!("non-uniform time grid: expected t_ms={expected}, found {t}"),
                ))
            } else {
                Ok(())
            }
        }
    }
}
