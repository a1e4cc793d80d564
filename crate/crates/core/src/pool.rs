//! Samples, the fixed candidate pool, and the dataset CSV format.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{FomoError, Result};

/// One input-output pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Sample { x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    fn is_finite(&self) -> bool {
        self.y.is_finite() && self.x.iter().all(|v| v.is_finite())
    }
}

/// A fixed dataset together with the indices currently used for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    samples: Vec<Sample>,
    chosen: BTreeSet<usize>,
}

impl CandidatePool {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(FomoError::InvalidInput("candidate pool is empty".into()));
        };
        let d = first.dim();
        if d == 0 {
            return Err(FomoError::InvalidInput("input dimension must be at least 1".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.dim() != d {
                return Err(FomoError::InvalidInput(format!(
                    "sample {i} has dimension {}, expected {d}",
                    s.dim()
                )));
            }
            if !s.is_finite() {
                return Err(FomoError::InvalidInput(format!("sample {i} is not finite")));
            }
        }
        Ok(CandidatePool { samples, chosen: BTreeSet::new() })
    }

    /// Build from an input matrix (rows are samples) and outputs.
    pub fn from_arrays(x: &Array2<f64>, y: &Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(FomoError::InvalidInput(format!(
                "{} input rows but {} outputs",
                x.nrows(),
                y.len()
            )));
        }
        let samples = x
            .rows()
            .into_iter()
            .zip(y.iter())
            .map(|(row, &y)| Sample::new(row.to_vec(), y))
            .collect();
        Self::new(samples)
    }

    pub fn with_chosen(mut self, chosen: impl IntoIterator<Item = usize>) -> Result<Self> {
        self.chosen.clear();
        self.add_chosen(chosen)?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn chosen(&self) -> &BTreeSet<usize> {
        &self.chosen
    }

    pub fn is_chosen(&self, index: usize) -> bool {
        self.chosen.contains(&index)
    }

    /// Union `indices` into the chosen set; returns how many were new.
    pub fn add_chosen(&mut self, indices: impl IntoIterator<Item = usize>) -> Result<usize> {
        let n = self.len();
        let mut added = 0;
        for i in indices {
            if i >= n {
                return Err(FomoError::InvalidInput(format!("index {i} out of range for pool of {n}")));
            }
            if self.chosen.insert(i) {
                added += 1;
            }
        }
        Ok(added)
    }

    /// Split into (training, remaining), both in index order.
    pub fn partition(&self) -> (Vec<Sample>, Vec<Sample>) {
        let mut training = Vec::with_capacity(self.chosen.len());
        let mut remaining = Vec::with_capacity(self.len() - self.chosen.len());
        for (i, s) in self.samples.iter().enumerate() {
            if self.chosen.contains(&i) {
                training.push(s.clone());
            } else {
                remaining.push(s.clone());
            }
        }
        (training, remaining)
    }

    /// Inputs of every sample as a matrix.
    pub fn inputs(&self) -> Array2<f64> {
        self.inputs_of(0..self.len())
    }

    pub fn outputs(&self) -> Array1<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }

    pub fn inputs_of(&self, indices: impl IntoIterator<Item = usize>) -> Array2<f64> {
        let d = self.dim();
        let mut flat = Vec::new();
        let mut rows = 0;
        for i in indices {
            flat.extend_from_slice(&self.samples[i].x);
            rows += 1;
        }
        Array2::from_shape_vec((rows, d), flat).expect("rows have pool dimension")
    }

    pub fn outputs_of(&self, indices: impl IntoIterator<Item = usize>) -> Array1<f64> {
        indices.into_iter().map(|i| self.samples[i].y).collect()
    }

    /// Training arrays for the current chosen set.
    pub fn training_arrays(&self) -> (Array2<f64>, Array1<f64>) {
        (
            self.inputs_of(self.chosen.iter().copied()),
            self.outputs_of(self.chosen.iter().copied()),
        )
    }

    /// A pool holding only the first `n` samples (no chosen indices).
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(FomoError::InvalidInput(format!(
                "prefix of {n} from pool of {}",
                self.len()
            )));
        }
        Self::new(self.samples[..n].to_vec())
    }
}

/// Free-function form of [`CandidatePool::partition`].
pub fn pool_partition(pool: &CandidatePool) -> (Vec<Sample>, Vec<Sample>) {
    pool.partition()
}

fn format_f64(v: f64) -> String {
    // 17 significant digits round-trip every f64 exactly.
    format!("{v:.16e}")
}

/// Write samples as CSV with header `x0,...,x{d-1},y`.
pub fn write_dataset<W: Write>(writer: W, samples: &[Sample]) -> Result<()> {
    let d = samples.first().map_or(0, Sample::dim);
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for s in samples {
        let mut rec: Vec<String> = s.x.iter().map(|&v| format_f64(v)).collect();
        rec.push(format_f64(s.y));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read the CSV dataset format.
pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let cols = header.len();
    if cols < 2 || header.get(cols - 1) != Some("y") {
        return Err(FomoError::InvalidInput(
            "dataset header must be x0,...,x{d-1},y".into(),
        ));
    }
    for (j, name) in header.iter().take(cols - 1).enumerate() {
        if name != format!("x{j}") {
            return Err(FomoError::InvalidInput(format!("unexpected column `{name}`")));
        }
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| FomoError::InvalidInput(format!("row {}: {e}", line + 1)))?;
        let (x, y) = vals.split_at(cols - 1);
        out.push(Sample::new(x.to_vec(), y[0]));
    }
    Ok(out)
}

pub fn write_dataset_file(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    crate::io::write_atomic(path, |f| write_dataset(f, samples))
}

pub fn read_dataset_file(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    read_dataset(std::fs::File::open(path)?)
}
