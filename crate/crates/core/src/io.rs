//! CSV and JSON files.

use std::fs;
use std::path::Path;

use crate::moments::Dataset;
use crate::{Error, Matrix, Result};

/// Reads a CSV with a header row of feature names and numeric cells.
pub fn read_dataset_str(s: &str) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(s.as_bytes());
    let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(Error::Data("header must name every column".into()));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        for (k, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!("line {}: `{cell}` in column `{}` is not a number", rows + 2, names[k]))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Data("data file has no rows".into()));
    }
    Dataset::new(names.clone(), Matrix::from_row_slice(rows, names.len(), &values))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    read_dataset_str(&fs::read_to_string(path)?).map_err(|e| e.context(path.display().to_string()))
}

pub fn dataset_to_csv_string(d: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(d.names())?;
    for row in d.values().row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    Ok(fs::write(path, dataset_to_csv_string(d)?)?)
}
