//! Per-iteration trace CSV.

use std::io::Write;

use fedipm_core::centralpath::{TraceRow, TRACE_HEADER};

use crate::error::{CliError, CliResult};

/// Significant digits kept for floating-point columns.
pub const TRACE_DIGITS: usize = 10;

fn float(v: f64) -> String {
    format!("{:.*e}", TRACE_DIGITS - 1, v)
}

pub fn trace_record(row: &TraceRow) -> [String; 8] {
    [
        row.iter.to_string(),
        float(row.t_tilde),
        float(row.gamma_max),
        float(row.phi),
        float(row.gap_bound),
        row.uplink_words.to_string(),
        row.downlink_words.to_string(),
        float(row.objective),
    ]
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::io("trace", e.into());
    w.write_record(TRACE_HEADER.split(',')).map_err(csv_err)?;
    for row in rows {
        w.write_record(trace_record(row)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io("trace", e))
}
