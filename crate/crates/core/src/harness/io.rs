use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Twelve significant digits in scientific notation.
pub fn format_value(v: f64) -> String {
    format!("{v:.11e}")
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// CSV text with a leading `time` column.
pub fn table_csv(times: &[f64], names: &[String], values: &DMatrix<f64>) -> Result<String> {
    if values.nrows() != times.len() || values.ncols() != names.len() {
        return Err(Error::dim(format!(
            "table {:?} with {} times and {} names",
            values.shape(),
            times.len(),
            names.len()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("time").chain(names.iter().map(String::as_str)))
        .map_err(csv_error)?;
    for (k, t) in times.iter().enumerate() {
        let row = values.row(k);
        let row = std::iter::once(format_value(*t)).chain(row.iter().map(|v| format_value(*v)));
        w.write_record(row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(csv_error)?;
    String::from_utf8(bytes).map_err(csv_error)
}

pub fn series_csv(ts: &TimeSeries) -> Result<String> {
    table_csv(&ts.times(), &ts.names, &ts.values)
}

/// Reads a CSV with a header row and a uniformly sampled time column first.
/// Empty or `NaN` cells become missing samples.
pub fn read_series_csv(path: &Path) -> Result<TimeSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers().map_err(csv_error)?.clone();
    if header.len() < 2 {
        return Err(Error::Parse(format!(
            "{}: need a time column and at least one channel",
            path.display()
        )));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut times = Vec::new();
    let mut data = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let cell = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(f64::NAN);
            }
            s.parse::<f64>().map_err(|_| {
                Error::Parse(format!("{} row {}: bad number \"{s}\"", path.display(), line + 2))
            })
        };
        let t = cell(0)?;
        if !t.is_finite() {
            return Err(Error::Parse(format!("{} row {}: missing time", path.display(), line + 2)));
        }
        times.push(t);
        for i in 1..=names.len() {
            data.push(cell(i)?);
        }
    }
    if times.len() < 2 {
        return Err(Error::Parse(format!("{}: need at least two rows", path.display())));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::Parse(format!("{}: time column is not uniformly sampled", path.display())));
    }
    let values = DMatrix::from_row_slice(times.len(), names.len(), &data);
    TimeSeries::new(dt, times[0], names, values)
}

pub fn json_pretty(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}
