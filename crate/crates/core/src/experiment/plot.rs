//! CSV emission for result tables and plot data.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{summarize, ExperimentRecord, ScatterRow, SummaryRow};
use crate::error::Result;
use crate::io::write_atomic;

fn write_rows<S: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = S>) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(header)?;
        for row in rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    })
}

const RECORD_HEADER: [&str; 9] =
    ["run_id", "iteration_or_n", "n_train", "e_mse", "e_mse_paper", "e_logpdf", "new_count", "wall_time_s", "status"];

pub fn write_records(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.run_id, r.iteration_or_n));
    write_rows(path, &RECORD_HEADER, sorted)
}

pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// One band file per metric: `key,count,failed,median,min,max`, keys ascending.
pub fn write_summary(dir: &Path, stem: &str, summary: &[SummaryRow]) -> Result<Vec<PathBuf>> {
    let metrics: [(&str, fn(&SummaryRow) -> super::Band); 4] = [
        ("e_mse", |r| r.e_mse),
        ("e_mse_paper", |r| r.e_mse_paper),
        ("e_logpdf", |r| r.e_logpdf),
        ("n_train", |r| r.n_train),
    ];
    let mut written = Vec::new();
    for (name, get) in metrics {
        let path = dir.join(format!("{stem}_band_{name}.csv"));
        let rows = summary.iter().map(|r| {
            let b = get(r);
            (r.key, r.count, r.failed, b.median, b.min, b.max)
        });
        write_rows(&path, &["key", "count", "failed", "median", "min", "max"], rows)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_trajectories(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    let mut rows: Vec<_> = records.iter().map(|r| (r.run_id, r.iteration_or_n, r.n_train, r.new_count)).collect();
    rows.sort_unstable();
    write_rows(path, &["run_id", "iteration", "n_chosen", "new_count"], rows)
}

pub fn write_scatter(path: &Path, rows: &[ScatterRow]) -> Result<()> {
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| (r.run_id, r.iteration, r.index));
    write_rows(path, &["run_id", "iteration", "index", "log10_w", "log10_var", "chosen", "selected"], rows)
}

/// Tables to turn into plot files.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlotBundle<'a> {
    /// Random-sampling sweep records, keyed by training size.
    pub sweep: Option<&'a [ExperimentRecord]>,
    /// Selection records, keyed by iteration.
    pub fomo: Option<&'a [ExperimentRecord]>,
    pub scatter: Option<&'a [ScatterRow]>,
}

/// Write band, trajectory and scatter files under `dir`; returns the paths.
/// Selection bands carry each run's final state forward past its last iteration.
pub fn emit_plot_data(dir: &Path, bundle: &PlotBundle<'_>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if let Some(records) = bundle.sweep {
        written.extend(write_summary(dir, "sweep", &summarize(records))?);
    }
    if let Some(records) = bundle.fomo {
        written.extend(write_summary(dir, "fomo", &summarize(&super::carry_forward(records)))?);
        let path = dir.join("trajectories.csv");
        write_trajectories(&path, records)?;
        written.push(path);
    }
    if let Some(rows) = bundle.scatter {
        let path = dir.join("scatter.csv");
        write_scatter(&path, rows)?;
        written.push(path);
    }
    Ok(written)
}
