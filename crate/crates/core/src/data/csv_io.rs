//! CSV reading and writing for series, truth and score matrices.
//!
//! Numbers are written with 17 significant digits so that a save/load cycle
//! reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{AdjacencyTruth, DataError, TimeSeries};

/// Formats a float with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn open(path: &Path, has_header: bool, delimiter: u8) -> Result<csv::Reader<File>, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_header)
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn read_table(path: &Path, has_header: bool, delimiter: u8) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>), DataError> {
    let mut reader = open(path, has_header, delimiter)?;
    let parse_err = |e: csv::Error| DataError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let header = if has_header {
        Some(reader.headers().map_err(parse_err)?.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };
    let mut width = header.as_ref().map(Vec::len);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(parse_err)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::Ragged {
                line,
                expected,
                got: record.len(),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(column, cell)| {
                cell.parse::<f64>().map_err(|_| DataError::NonNumeric {
                    line,
                    column: column + 1,
                    cell: cell.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Empty(path.display().to_string()));
    }
    Ok((header, rows))
}

/// Reads a rectangular numeric table, rows = time, columns = variables.
pub fn load_csv(path: &Path, has_header: bool, delimiter: u8) -> Result<TimeSeries, DataError> {
    let (header, rows) = read_table(path, has_header, delimiter)?;
    let series = TimeSeries::from_rows(&rows)?;
    match header {
        Some(names) => series.with_names(names),
        None => Ok(series),
    }
}

pub fn save_csv(series: &TimeSeries, path: &Path, delimiter: u8) -> Result<(), DataError> {
    let sep = (delimiter as char).to_string();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>, line: String| writeln!(w, "{line}").map_err(|e| io_err(path, e));
    write(&mut w, series.column_names().join(&sep))?;
    for t in 0..series.len() {
        let line = series.row(t).iter().map(|&v| format_f64(v)).collect::<Vec<_>>().join(&sep);
        write(&mut w, line)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes a square matrix without header, one row per line.
pub fn save_matrix(values: &[f64], dim: usize, path: &Path) -> Result<(), DataError> {
    let mut out = String::new();
    for row in values.chunks_exact(dim) {
        out.push_str(&row.iter().map(|&v| format_f64(v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a headerless square numeric matrix.
pub fn load_matrix(path: &Path) -> Result<(usize, Vec<f64>), DataError> {
    let (_, rows) = read_table(path, false, b',')?;
    let dim = rows.len();
    if rows[0].len() != dim {
        return Err(DataError::NotSquare {
            rows: dim,
            cols: rows[0].len(),
        });
    }
    Ok((dim, rows.concat()))
}

/// Truth file: `p x p` of 0/1, row = target, column = source.
pub fn save_truth(truth: &AdjacencyTruth, path: &Path) -> Result<(), DataError> {
    let p = truth.dim();
    let mut out = String::new();
    for j in 0..p {
        let row: Vec<&str> = (0..p).map(|i| if truth.get(j, i) { "1" } else { "0" }).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn load_truth(path: &Path, include_self: bool) -> Result<AdjacencyTruth, DataError> {
    let (dim, values) = load_matrix(path)?;
    let mut edges = Vec::with_capacity(values.len());
    for (idx, v) in values.into_iter().enumerate() {
        edges.push(match v {
            x if x == 0.0 => false,
            x if x == 1.0 => true,
            _ => {
                return Err(DataError::NonNumeric {
                    line: idx / dim + 1,
                    column: idx % dim + 1,
                    cell: v.to_string(),
                })
            }
        });
    }
    AdjacencyTruth::new(dim, edges, include_self)
}
