//! Tabular run artifacts: a minimal CSV representation plus the small
//! statistics the plots need.
//!
//! Values are written with Rust's shortest-roundtrip float formatting, so
//! a table serialized twice from the same numbers is byte-identical and
//! parsing recovers every `f64` bit-exactly. Cells are never quoted;
//! writing a cell that would need quoting (comma, newline, CR) is a
//! contract error rather than a silent format change.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Formats an `f64` with shortest-roundtrip precision.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

/// An in-memory CSV table with a mandatory header row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> CsvTable {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::InvalidConfig {
                detail: format!(
                    "csv row has {} cells, header has {}",
                    row.len(),
                    self.header.len()
                ),
            });
        }
        for cell in &row {
            if cell.contains(',') || cell.contains('\n') || cell.contains('\r') {
                return Err(Error::InvalidConfig {
                    detail: format!("csv cell {cell:?} would require quoting"),
                });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Serializes with `\n` line endings and a trailing newline.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Parses text produced by [`CsvTable::render`].
    pub fn parse(text: &str) -> Result<CsvTable> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::EmptySeries {
                detail: "csv text has no header line".to_string(),
            })?
            .split(',')
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let row: Vec<String> = line.split(',').map(|s| s.to_string()).collect();
            if row.len() != header.len() {
                return Err(Error::InvalidConfig {
                    detail: format!(
                        "csv row {} has {} cells, header has {}",
                        i + 2,
                        row.len(),
                        header.len()
                    ),
                });
            }
            rows.push(row);
        }
        Ok(CsvTable { header, rows })
    }

    /// Reads and parses a CSV file.
    pub fn read(path: &Path) -> Result<CsvTable> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        CsvTable::parse(&text)
    }

    /// Writes the rendered table to a file.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
    }

    /// Index of a named column, or a `MissingColumn` error.
    pub fn column_index(&self, name: &str, origin: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
                path: origin.to_string(),
            })
    }

    /// All values of a named column parsed as `f64`.
    pub fn column_f64(&self, name: &str, origin: &str) -> Result<Vec<f64>> {
        let idx = self.column_index(name, origin)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row[idx].parse::<f64>().map_err(|_| Error::InvalidConfig {
                    detail: format!(
                        "csv {origin} row {}: column {name:?} value {:?} is not a number",
                        i + 2,
                        row[idx]
                    ),
                })
            })
            .collect()
    }

    /// All values of a named column as strings.
    pub fn column_str(&self, name: &str, origin: &str) -> Result<Vec<String>> {
        let idx = self.column_index(name, origin)?;
        Ok(self.rows.iter().map(|row| row[idx].clone()).collect())
    }
}

/// Trailing moving average: element `i` averages the last
/// `min(window, i+1)` values, so the output has the input's length and no
/// warm-up gap.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        let n = (i + 1).min(window);
        out.push(sum / n as f64);
    }
    out
}

/// Spearman rank correlation of two equal-length series. Ties receive
/// their average rank.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op: "spearman",
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    if a.len() < 2 {
        return Err(Error::EmptySeries {
            detail: "spearman needs at least two points".to_string(),
        });
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Average 1-based rank of positions i..=j.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::EmptySeries {
            detail: "spearman: constant series has no rank correlation".to_string(),
        });
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats_bit_exactly() {
        let mut table = CsvTable::new(&["run_id", "value"]);
        let values = [0.1, 1.0 / 3.0, f64::MIN_POSITIVE, 12345.678901234567, -0.0];
        for (i, v) in values.iter().enumerate() {
            table
                .push_row(vec![format!("run{i}"), format_f64(*v)])
                .unwrap();
        }
        let rendered = table.render();
        let parsed = CsvTable::parse(&rendered).unwrap();
        assert_eq!(parsed, table);
        let back = parsed.column_f64("value", "test").unwrap();
        for (orig, round) in values.iter().zip(&back) {
            assert_eq!(orig.to_bits(), round.to_bits());
        }
        assert_eq!(parsed.render(), rendered);
    }

    #[test]
    fn csv_rejects_malformed_cells_and_rows() {
        let mut table = CsvTable::new(&["a", "b"]);
        assert!(table.push_row(vec!["1".into()]).is_err());
        assert!(table.push_row(vec!["1".into(), "x,y".into()]).is_err());
        assert!(table.push_row(vec!["1".into(), "x\ny".into()]).is_err());
        table.push_row(vec!["1".into(), "2".into()]).unwrap();
        assert_eq!(table.rows.len(), 1);
    }

    #[test]
    fn csv_missing_column_is_a_named_error() {
        let table = CsvTable::parse("a,b\n1,2\n").unwrap();
        match table.column_f64("c", "demo.csv") {
            Err(Error::MissingColumn { column, path }) => {
                assert_eq!(column, "c");
                assert_eq!(path, "demo.csv");
            }
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn moving_average_trailing_window() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(moving_average(&v, 3), vec![1.0, 1.5, 2.0, 3.0, 4.0]);
        assert_eq!(moving_average(&v, 1), v.to_vec());
        assert_eq!(moving_average(&[], 4), Vec::<f64>::new());
        // Window larger than the series: cumulative mean.
        assert_eq!(moving_average(&v, 100)[4], 3.0);
    }

    #[test]
    fn spearman_known_values() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let inc = [10.0, 20.0, 30.0, 40.0, 50.0];
        let dec = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&x, &inc).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &dec).unwrap() + 1.0).abs() < 1e-12);
        // Monotone but nonlinear is still rank-perfect.
        let cubed: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        assert!((spearman(&x, &cubed).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_handles_ties_with_average_ranks() {
        // Textbook example: ties share the mean of their positions.
        let a = [1.0, 2.0, 2.0, 3.0];
        let ranks = average_ranks(&a);
        assert_eq!(ranks, vec![1.0, 2.5, 2.5, 4.0]);
        // A constant series has undefined correlation.
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
