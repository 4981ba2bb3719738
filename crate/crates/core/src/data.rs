//! Labeled samples and their CSV representation.

use std::path::Path;

use crate::error::{invalid, Error, Result};

/// A feature matrix with ±1 labels. Immutable after construction; the
/// empirical measure of every downstream quantity lives here.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    /// Row-major `n × p`.
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from a row-major feature buffer.
    pub fn new(features: Vec<f64>, labels: Vec<f64>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(invalid("feature count p must be at least 1"));
        }
        if labels.is_empty() {
            return Err(invalid("sample count n must be at least 1"));
        }
        let n = labels.len();
        if features.len() != n * p {
            return Err(invalid(format!(
                "feature buffer has {} entries, expected n*p = {}",
                features.len(),
                n * p
            )));
        }
        for (i, x) in features.iter().enumerate() {
            if !x.is_finite() {
                return Err(invalid(format!(
                    "feature at row {}, column f{} is not finite",
                    i / p,
                    i % p
                )));
            }
        }
        for (i, y) in labels.iter().enumerate() {
            if *y != 1.0 && *y != -1.0 {
                return Err(invalid(format!("label at row {i} is {y}, expected -1 or +1")));
            }
        }
        Ok(Dataset { n, p, features, labels })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        let p = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != p) {
            return Err(invalid("rows have inconsistent widths"));
        }
        let features = rows.into_iter().flatten().collect();
        Dataset::new(features, labels, p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.p)
    }

    /// New dataset holding the given rows (duplicates allowed) in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(invalid("subset must keep at least one row"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n) {
            return Err(invalid(format!("subset index {bad} out of range (n = {})", self.n)));
        }
        let mut features = Vec::with_capacity(indices.len() * self.p);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(features, labels, self.p)
    }

    /// Reads a dataset from CSV. The header names the columns; every column
    /// must be numeric and the column named `label` must hold -1/+1. Feature
    /// order follows header order with the label column removed.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let mut reader = csv::Reader::from_path(path.as_ref()).map_err(csv_open_error)?;
        let headers = reader
            .headers()
            .map_err(|e| invalid(format!("cannot read CSV header: {e}")))?
            .clone();
        let label_col = headers
            .iter()
            .position(|h| h == "label")
            .ok_or_else(|| Error::Ingestion {
                row: 0,
                column: "label".into(),
                message: "missing required column".into(),
            })?;
        let names: Vec<String> = headers.iter().map(|s| s.to_string()).collect();

        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<f64> = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let row_no = idx + 1;
            let record = record.map_err(|e| Error::Ingestion {
                row: row_no,
                column: "<record>".into(),
                message: e.to_string(),
            })?;
            if record.len() != names.len() {
                return Err(Error::Ingestion {
                    row: row_no,
                    column: "<record>".into(),
                    message: format!("expected {} fields, found {}", names.len(), record.len()),
                });
            }
            let mut row = Vec::with_capacity(names.len() - 1);
            for (col, field) in record.iter().enumerate() {
                let value: f64 = field.trim().parse().map_err(|_| Error::Ingestion {
                    row: row_no,
                    column: names[col].clone(),
                    message: format!("non-numeric cell {field:?}"),
                })?;
                if col == label_col {
                    if value != 1.0 && value != -1.0 {
                        return Err(Error::Ingestion {
                            row: row_no,
                            column: names[col].clone(),
                            message: format!("label must be -1 or +1, found {field}"),
                        });
                    }
                    labels.push(value);
                } else {
                    if !value.is_finite() {
                        return Err(Error::Ingestion {
                            row: row_no,
                            column: names[col].clone(),
                            message: "feature is not finite".into(),
                        });
                    }
                    row.push(value);
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(invalid("CSV contains no data rows"));
        }
        Dataset::from_rows(rows, labels)
    }

    /// Writes the dataset as CSV with columns `f0..f{p-1},label`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref()).map_err(csv_open_error)?;
        let mut header: Vec<String> = (0..self.p).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        writer
            .write_record(&header)
            .map_err(|e| invalid(format!("CSV write failed: {e}")))?;
        for i in 0..self.n {
            let mut record: Vec<String> = self.row(i).iter().map(|x| format!("{x}")).collect();
            record.push(format!("{}", self.labels[i] as i64));
            writer
                .write_record(&record)
                .map_err(|e| invalid(format!("CSV write failed: {e}")))?;
        }
        writer
            .flush()
            .map_err(|e| invalid(format!("CSV flush failed: {e}")))?;
        Ok(())
    }
}

fn csv_open_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => invalid(format!("CSV error: {other:?}")),
    }
}
