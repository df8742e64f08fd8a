//! CSV reading and writing for datasets and band traces.
//!
//! Numbers are written with Rust's shortest round-trip decimal formatting,
//! so a written file parses back to bit-identical `f64` values.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{Dataset, Features};
use crate::error::{Error, Result};

/// Shortest decimal that parses back to the same `f64`; exponent notation
/// outside `[1e-5, 1e16)` keeps tiny and huge values short.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Reads a dataset whose final column is the response.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    read_dataset(file)
}

pub fn read_dataset(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let width = rdr
        .headers()
        .map_err(|e| Error::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .len();
    if width < 2 {
        return Err(Error::Csv {
            row: 1,
            message: format!("need at least one feature column and a response, found {width} column(s)"),
        });
    }
    let mut values = Vec::new();
    let mut response = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let record = record.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Csv {
                row,
                message: format!("expected {width} cells, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                row,
                message: format!("column {}: `{cell}` is not a number", j + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    row,
                    message: format!("column {}: `{cell}` is not finite", j + 1),
                });
            }
            if j + 1 == width {
                response.push(v);
            } else {
                values.push(v);
            }
        }
    }
    Dataset::new(Features::new(values, width - 1)?, response)
}

/// Header `x_0,…,x_{d−1},y` followed by one row per point.
pub fn write_dataset(data: &Dataset, mut out: impl Write) -> Result<()> {
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x_{j}")).collect();
    header.push("y".into());
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.len() {
        let mut cells: Vec<String> = data.x(i).iter().map(|&v| format_f64(v)).collect();
        cells.push(format_f64(data.y(i)));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Reads the `lower` and `upper` columns of a band trace.
pub fn read_bands(reader: impl Read) -> Result<Vec<crate::methods::Interval>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Csv {
            row: 1,
            message: format!("missing `{name}` column"),
        })
    };
    let (lo, hi) = (col("lower")?, col("upper")?);
    let mut bands = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        let parse = |j: usize| -> Result<f64> {
            let cell = record.get(j).unwrap_or("");
            cell.parse::<f64>()
                .ok()
                .filter(|v| !v.is_nan())
                .ok_or_else(|| Error::Csv {
                    row,
                    message: format!("`{cell}` is not a number"),
                })
        };
        bands.push(crate::methods::Interval::new(parse(lo)?, parse(hi)?));
    }
    Ok(bands)
}
