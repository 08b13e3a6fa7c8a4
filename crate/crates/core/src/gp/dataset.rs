use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Residual training samples: time, `z = [q, q̇, q̈]` and target `f(z)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    pub joints: usize,
    pub t: Vec<f64>,
    pub z: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

impl TrainingSet {
    pub fn new(joints: usize) -> Self {
        Self {
            joints,
            ..Default::default()
        }
    }

    pub fn push(&mut self, t: f64, z: DVector<f64>, y: DVector<f64>) {
        debug_assert_eq!(z.len(), 3 * self.joints);
        debug_assert_eq!(y.len(), self.joints);
        self.t.push(t);
        self.z.push(z);
        self.y.push(y);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn inputs(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 3 * self.joints, |i, j| self.z[i][j])
    }

    pub fn targets(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.joints, |i, j| self.y[i][j])
    }

    pub fn header(joints: usize) -> Vec<String> {
        std::iter::once("t".to_string())
            .chain((1..=3 * joints).map(|i| format!("z{i}")))
            .chain((1..=joints).map(|i| format!("y{i}")))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(Self::header(self.joints)).map_err(io)?;
        for i in 0..self.len() {
            let row: Vec<String> = std::iter::once(self.t[i])
                .chain(self.z[i].iter().copied())
                .chain(self.y[i].iter().copied())
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let shown = path.display().to_string();
        let parse_err = |line: u64, message: String| Error::Parse {
            path: shown.clone(),
            line,
            message,
        };
        let mut r = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(|e| Error::Io(e.to_string()))?;
        let header = r.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let cols = header.len();
        if cols < 5 || (cols - 1) % 4 != 0 {
            return Err(parse_err(1, format!("expected 1 + 4n columns, found {cols}")));
        }
        let joints = (cols - 1) / 4;
        let expected = Self::header(joints);
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(parse_err(1, format!("expected header {}", expected.join(","))));
        }
        let mut set = Self::new(joints);
        for rec in r.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != cols {
                return Err(parse_err(line, format!("expected {cols} fields, found {}", rec.len())));
            }
            let vals = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(line, format!("not a finite number: {s:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            set.push(
                vals[0],
                DVector::from_column_slice(&vals[1..1 + 3 * joints]),
                DVector::from_column_slice(&vals[1 + 3 * joints..]),
            );
        }
        if set.is_empty() {
            return Err(parse_err(1, "no data rows".into()));
        }
        Ok(set)
    }
}
