//! Column-oriented time series with an RFC-4180 CSV writer.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

/// Recorded samples; `rows[i][0]` is always the time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Set when the producing run stopped early.
    pub truncated: bool,
}

impl TimeSeries {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            truncated: false,
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Copy of one column, or `None` if the name is unknown.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    /// CSV text: header row, then one line per sample, 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.columns.iter().map(|c| csv_field(c)).collect();
        out.push_str(&header.join(","));
        out.push_str("\r\n");
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_number(&mut out, *v);
            }
            out.push_str("\r\n");
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv_string().as_bytes())
    }
}

/// Formats `v` with 17 significant digits in scientific notation.
pub fn write_number(out: &mut String, v: f64) {
    if v.is_finite() {
        let _ = write!(out, "{v:.16e}");
    } else if v.is_nan() {
        out.push_str("NaN");
    } else if v > 0.0 {
        out.push_str("inf");
    } else {
        out.push_str("-inf");
    }
}

/// Quotes a field when it contains a separator, quote or line break.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_seventeen_digits() {
        let mut ts = TimeSeries::new(vec!["t".into(), "x".into()]);
        ts.push(vec![0.0, 1.0 / 3.0]);
        let csv = ts.to_csv_string();
        let mut lines = csv.split("\r\n");
        assert_eq!(lines.next(), Some("t,x"));
        let row = lines.next().unwrap();
        let x = row.split(',').nth(1).unwrap();
        assert_eq!(x, "3.3333333333333331e-1");
        assert_eq!(x.parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("q\""), "\"q\"\"\"");
        assert_eq!(csv_field("plain"), "plain");
    }

    #[test]
    fn column_lookup() {
        let mut ts = TimeSeries::new(vec!["t".into(), "x".into()]);
        ts.push(vec![0.0, 2.0]);
        ts.push(vec![1.0, 3.0]);
        assert_eq!(ts.column("x"), Some(vec![2.0, 3.0]));
        assert_eq!(ts.column("nope"), None);
        assert_eq!(ts.times(), vec![0.0, 1.0]);
    }
}
