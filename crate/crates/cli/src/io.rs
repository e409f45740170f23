//! Plain CSV matrices: optional header row, optional label column.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{CliError, Result};

/// Numeric matrix with the labels found in (or written to) its CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub values: Array2<f64>,
    pub row_labels: Option<Vec<String>>,
    pub col_labels: Option<Vec<String>>,
}

impl LabeledMatrix {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok()
}

pub fn load_matrix(path: &Path) -> Result<LabeledMatrix> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_matrix(file, path)
}

/// Reads a numeric CSV. The first row is a header if any of its cells is not
/// a number; the first column holds labels if the first data row starts with
/// a non-number.
pub fn read_matrix<R: Read>(reader: R, path: &Path) -> Result<LabeledMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let err = |line: u64, msg: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(err(1, "file holds no data".into()));
    }

    let header = records[0].1.iter().any(|c| parse_cell(c).is_none());
    let body = if header { &records[1..] } else { &records[..] };
    let Some((first_line, first)) = body.first() else {
        return Err(err(records[0].0 + 1, "header without data rows".into()));
    };
    let labelled = parse_cell(&first[0]).is_none();
    let skip = usize::from(labelled);
    let width = first.len();
    if width <= skip {
        return Err(err(*first_line, "row holds a label but no values".into()));
    }

    let mut values = Vec::with_capacity(body.len() * (width - skip));
    let mut row_labels = Vec::new();
    for (line, rec) in body {
        if rec.len() != width {
            return Err(err(*line, format!("expected {width} fields, found {}", rec.len())));
        }
        if labelled {
            row_labels.push(rec[0].to_string());
        }
        for (j, cell) in rec.iter().enumerate().skip(skip) {
            let v = parse_cell(cell).ok_or_else(|| err(*line, format!("field {} is not a number: '{cell}'", j + 1)))?;
            values.push(v);
        }
    }
    let col_labels = if header {
        let (line, rec) = &records[0];
        if rec.len() != width {
            return Err(err(*line, format!("header has {} fields, data rows have {width}", rec.len())));
        }
        Some(rec.iter().skip(skip).map(str::to_string).collect())
    } else {
        None
    };
    Ok(LabeledMatrix {
        values: Array2::from_shape_vec((body.len(), width - skip), values).expect("rectangular by construction"),
        row_labels: labelled.then_some(row_labels),
        col_labels,
    })
}

/// Formats a value with 17 significant digits in scientific notation.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Default column labels `v1 … vV`.
pub fn voxel_labels(voxels: usize) -> Vec<String> {
    (1..=voxels).map(|i| format!("v{i}")).collect()
}

/// Writes `values` with a header row and a label column. `corner` names the
/// label column.
pub fn write_matrix(
    path: &Path,
    corner: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: ArrayView2<'_, f64>,
) -> Result<()> {
    assert_eq!(row_labels.len(), values.nrows());
    assert_eq!(col_labels.len(), values.ncols());
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        write!(out, "{corner}")?;
        for c in col_labels {
            write!(out, ",{c}")?;
        }
        writeln!(out)?;
        for (label, row) in row_labels.iter().zip(values.rows()) {
            write!(out, "{label}")?;
            for v in row {
                write!(out, ",{}", format_value(*v))?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().map_err(|e| CliError::io(path, e))
}
