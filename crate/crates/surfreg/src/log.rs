//! Per-iteration CSV log.

use std::fmt::Write as _;

use surfreg_core::rigid::IterationReport;
use thiserror::Error;

pub const LOG_HEADER: &str = "iter,e_fit,e_rigid,e_arap,e_plane,e_total,step_rot,step_trans,rmsd";

/// One CSV row. `e_total` includes the regularizer, so it can exceed the sum
/// of the listed terms by `λ‖r̃‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub e_fit: f64,
    pub e_rigid: f64,
    pub e_arap: f64,
    pub e_plane: f64,
    pub e_total: f64,
    pub step_rot: f64,
    pub step_trans: f64,
    pub rmsd: f64,
}

impl From<&IterationReport> for LogRow {
    fn from(r: &IterationReport) -> Self {
        LogRow {
            iter: r.iter,
            e_fit: r.energies.e_fit,
            e_rigid: r.energies.e_rigid,
            e_arap: r.energies.e_arap,
            e_plane: r.energies.e_plane,
            e_total: r.energies.e_total,
            step_rot: r.step_rot_norm,
            step_trans: r.step_trans_norm,
            rmsd: r.rmsd_to_projection,
        }
    }
}

impl LogRow {
    fn values(&self) -> [f64; 8] {
        [
            self.e_fit,
            self.e_rigid,
            self.e_arap,
            self.e_plane,
            self.e_total,
            self.step_rot,
            self.step_trans,
            self.rmsd,
        ]
    }
}

/// Shortest decimal that parses back to the same bits; exponent form for
/// very small or large magnitudes.
pub fn format_shortest(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn write_log_rows(rows: &[LogRow]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{}", row.iter);
        for v in row.values() {
            let _ = write!(out, ",{}", format_shortest(v));
        }
        out.push('\n');
    }
    out
}

pub fn write_iteration_log(reports: &[IterationReport]) -> String {
    let rows: Vec<LogRow> = reports.iter().map(LogRow::from).collect();
    write_log_rows(&rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("log line {line}: {message}")]
pub struct LogError {
    pub line: usize,
    pub message: String,
}

pub fn parse_iteration_log(text: &str) -> Result<Vec<LogRow>, LogError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(LOG_HEADER) => {}
        other => {
            return Err(LogError {
                line: 1,
                message: format!("expected header {LOG_HEADER:?}, found {other:?}"),
            })
        }
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let err = |message: String| LogError { line: k + 2, message };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(err(format!("expected 9 fields, found {}", fields.len())));
            }
            let iter = fields[0]
                .parse()
                .map_err(|_| err(format!("bad iteration index {:?}", fields[0])))?;
            let mut v = [0.0; 8];
            for (slot, f) in v.iter_mut().zip(&fields[1..]) {
                *slot = f.parse().map_err(|_| err(format!("bad number {f:?}")))?;
            }
            Ok(LogRow {
                iter,
                e_fit: v[0],
                e_rigid: v[1],
                e_arap: v[2],
                e_plane: v[3],
                e_total: v[4],
                step_rot: v[5],
                step_trans: v[6],
                rmsd: v[7],
            })
        })
        .collect()
}
