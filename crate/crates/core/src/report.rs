//! JSON and CSV output for the report types.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::invalid(format!("unknown format {other:?}, expected json or csv"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

/// A report that flattens to CSV rows under a fixed header.
pub trait Tabular {
    fn csv_header() -> Vec<&'static str>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

/// Floats in CSV use the shortest text that parses back to the same value.
pub fn cell(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt_cell(v: Option<f64>) -> String {
    v.map(cell).unwrap_or_default()
}

/// Write `reports` as a JSON array or as CSV with a header row.
pub fn write_report<T: Serialize + Tabular, W: Write>(reports: &[T], format: Format, out: W) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::invalid("nothing to report"));
    }
    match format {
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, reports)?;
            writeln!(out).map_err(|e| Error::io("<report>", e))?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(T::csv_header())?;
            for r in reports {
                for row in r.csv_rows() {
                    w.write_record(&row)?;
                }
            }
            w.flush().map_err(|e| Error::io("<report>", e))?;
        }
    }
    Ok(())
}

/// [`write_report`] into a file.
pub fn emit_report<T: Serialize + Tabular>(reports: &[T], format: Format, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(reports, format, BufWriter::new(file))
}
