use std::path::Path;

use chrono::NaiveDateTime;

use super::TimeSeriesDataset;
use crate::error::{MatError, Result};
use crate::tensor::Tensor;

/// Policy for missing or non-finite numeric cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Imputation {
    /// Carry the last value forward; a leading gap takes the first valid value.
    #[default]
    FillForward,
    /// Any gap is an error.
    Strict,
}

#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Timestamp column; the first column when `None`.
    pub time_column: Option<String>,
    pub imputation: Imputation,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            time_column: None,
            imputation: Imputation::FillForward,
        }
    }
}

const TIME_FORMATS: &[&str] = &[
    "%d.%m.%Y %H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%d.%m.%Y %H:%M",
];

fn parse_time(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn parse_cell(s: &str) -> Option<f64> {
    let s = s.trim();
    match s {
        "" | "NaN" | "nan" | "NA" | "N/A" | "null" => Some(f64::NAN),
        _ => s.parse::<f64>().ok(),
    }
}

/// Reads a timestamped CSV: one timestamp column and numeric channels.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<TimeSeriesDataset> {
    let perr = |line: usize, detail: String| MatError::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => MatError::io(path, io),
            other => MatError::Data(format!("{}: {other:?}", path.display())),
        })?;
    let headers = reader.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    if headers.len() < 2 {
        return Err(perr(1, "header needs a timestamp column and at least one channel".into()));
    }
    let time_idx = match &opts.time_column {
        None => 0,
        Some(name) => headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| perr(1, format!("no column named {name:?}")))?,
    };
    let channels: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != time_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut lines = Vec::new();
    let mut times: Vec<NaiveDateTime> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            perr(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != headers.len() {
            return Err(perr(line, format!("expected {} fields, found {}", headers.len(), rec.len())));
        }
        let t = parse_time(&rec[time_idx]).ok_or_else(|| perr(line, format!("bad timestamp {:?}", &rec[time_idx])))?;
        if let Some(prev) = times.last() {
            if t <= *prev {
                return Err(perr(line, format!("timestamp {t} does not follow {prev}")));
            }
        }
        let mut row = Vec::with_capacity(channels.len());
        for (i, cell) in rec.iter().enumerate() {
            if i == time_idx {
                continue;
            }
            let v = parse_cell(cell).ok_or_else(|| perr(line, format!("bad number {cell:?} in column {}", headers[i].trim())))?;
            if !v.is_finite() && opts.imputation == Imputation::Strict {
                return Err(perr(line, format!("missing value in column {}", headers[i].trim())));
            }
            row.push(v);
        }
        times.push(t);
        rows.push(row);
        lines.push(line);
    }
    if rows.is_empty() {
        return Err(MatError::Data(format!("{} has no data rows", path.display())));
    }

    let m = channels.len();
    let n = rows.len();
    let mut values = vec![0.0; m * n];
    for c in 0..m {
        let mut last: Option<f64> = None;
        let mut leading = 0;
        for (t, row) in rows.iter().enumerate() {
            let v = row[c];
            if v.is_finite() {
                if last.is_none() {
                    for k in 0..leading {
                        values[c * n + k] = v;
                    }
                }
                last = Some(v);
                values[c * n + t] = v;
            } else if let Some(prev) = last {
                values[c * n + t] = prev;
            } else {
                leading += 1;
            }
        }
        if last.is_none() {
            return Err(MatError::Data(format!("channel {} has no finite values", channels[c])));
        }
    }
    Ok(TimeSeriesDataset {
        values: Tensor::matrix(m, n, values)?,
        timestamps: times.iter().map(|t| t.format("%Y-%m-%dT%H:%M:%S").to_string()).collect(),
        channels,
    })
}
