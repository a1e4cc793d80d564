//! Sweeps over random training subsets and batches of selection runs.

mod models;
mod plot;
mod profile;

use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::distribution::InputDistribution;
use crate::error::{FomoError, Result};
use crate::metrics::{evaluate_surrogate, Evaluation, TestSuite};
use crate::pool::{CandidatePool, Sample};
use crate::problems::Problem;
use crate::rng::StreamKey;
use crate::samplers::{latin_hypercube, latin_hypercube_in_distribution, uniform_design, DesignSpec, Scheme};
use crate::selection::{fomo_run, AcquisitionReport, RunHooks, RunOutcome};
use crate::surrogate::{Surrogate, SurrogateFactory};
use crate::DensityEstimate;

pub use models::{load_model, SaveModel, GP_DUMP_FILE};
pub use plot::{emit_plot_data, read_records, write_records, write_scatter, write_summary, write_trajectories, PlotBundle};
pub use profile::{
    Bench, EnsembleSettings, FomoSettings, ProblemKind, ProblemSettings, Profile, SizeGrid, SuiteSettings,
    SurrogateKind, SurrogateSettings, SweepSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// I.i.d. uniform over the input box.
    Uniform,
    /// Latin hypercube over the input box.
    Lhs,
    /// Latin hypercube in the probability space of the input distribution.
    LhsDistribution,
}

pub fn draw_inputs<R: rand::Rng + ?Sized>(
    distribution: &InputDistribution,
    sampling: Sampling,
    count: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    match sampling {
        Sampling::Uniform => uniform_design(&DesignSpec::new(count, Scheme::Uniform, distribution.clone()), rng),
        Sampling::Lhs => latin_hypercube(&DesignSpec::new(count, Scheme::Lhs, distribution.clone()), rng),
        Sampling::LhsDistribution => latin_hypercube_in_distribution(distribution, count, rng),
    }
}

/// Where replicate pools come from.
#[derive(Clone, Copy)]
pub enum PoolSource<'a> {
    /// Draw inputs and evaluate the map.
    Fresh { problem: &'a dyn Problem, distribution: &'a InputDistribution, sampling: Sampling },
    /// Subsample a precomputed dataset; replicates get disjoint pools when the dataset is large enough.
    Dataset(&'a [Sample]),
}

impl PoolSource<'_> {
    /// Pool for replicate `replicate`; its row order is random, so prefixes are random subsets.
    pub fn draw(&self, seed: u64, replicate: usize, count: usize) -> Result<CandidatePool> {
        let mut rng = StreamKey::new(seed, &format!("pool-{replicate}")).rng();
        match *self {
            PoolSource::Fresh { problem, distribution, sampling } => {
                let x = draw_inputs(distribution, sampling, count, &mut rng)?;
                let y = problem.evaluate_many(&x)?;
                CandidatePool::from_arrays(&x, &y)
            }
            PoolSource::Dataset(samples) => {
                if count > samples.len() {
                    return Err(FomoError::InvalidInput(format!(
                        "pool of {count} requested from a dataset of {}",
                        samples.len()
                    )));
                }
                // Disjoint blocks of one shuffled order while they last, random subsets after.
                let blocks = samples.len() / count;
                let ix: Vec<usize> = if replicate < blocks {
                    let mut order: Vec<usize> = (0..samples.len()).collect();
                    order.shuffle(&mut StreamKey::new(seed, "pool-blocks").rng());
                    order[replicate * count..(replicate + 1) * count].to_vec()
                } else {
                    sample(&mut rng, samples.len(), count).into_vec()
                };
                CandidatePool::new(ix.into_iter().map(|i| samples[i].clone()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub problem: ProblemKind,
    pub surrogate: SurrogateKind,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub sampling: Sampling,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(FomoError::Config("replicates must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes[0] == 0 {
            return Err(FomoError::Config("sample_sizes must be nonempty and positive".into()));
        }
        if self.sample_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FomoError::Config("sample_sizes must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn max_size(&self) -> usize {
        *self.sample_sizes.last().expect("validated")
    }

    /// Inclusive integer range.
    pub fn range(lo: usize, hi: usize) -> Vec<usize> {
        (lo..=hi).collect()
    }

    /// About `count` distinct sizes spaced evenly in log scale.
    pub fn log_spaced(lo: usize, hi: usize, count: usize) -> Vec<usize> {
        let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
        let mut out: Vec<usize> = (0..count)
            .map(|i| (a + (b - a) * i as f64 / (count.max(2) - 1) as f64).exp().round() as usize)
            .collect();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordStatus {
    Ok,
    FailedFit,
}

/// One evaluated model: a sweep cell or one selection iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub run_id: usize,
    pub iteration_or_n: usize,
    pub n_train: usize,
    pub e_mse: f64,
    pub e_mse_paper: f64,
    pub e_logpdf: f64,
    pub new_count: Option<usize>,
    pub wall_time_s: f64,
    pub status: RecordStatus,
}

impl ExperimentRecord {
    fn new(run_id: usize, key: usize, n_train: usize, metrics: Option<Evaluation>, wall: f64) -> Self {
        let (status, e) = match metrics {
            Some(e) => (RecordStatus::Ok, e),
            None => (RecordStatus::FailedFit, Evaluation { e_mse: f64::NAN, e_mse_paper: f64::NAN, e_logpdf: f64::NAN }),
        };
        ExperimentRecord {
            run_id,
            iteration_or_n: key,
            n_train,
            e_mse: e.e_mse,
            e_mse_paper: e.e_mse_paper,
            e_logpdf: e.e_logpdf,
            new_count: None,
            wall_time_s: wall,
            status,
        }
    }
}

/// Median, min and max of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Band {
    /// `None` for an empty slice. NaNs must be filtered by the caller.
    pub fn of(values: &[f64]) -> Option<Band> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let k = v.len();
        let median = if k % 2 == 1 { v[k / 2] } else { (v[k / 2 - 1] + v[k / 2]) / 2.0 };
        Some(Band { median, min: v[0], max: v[k - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub key: usize,
    pub count: usize,
    pub failed: usize,
    pub e_mse: Band,
    pub e_mse_paper: Band,
    pub e_logpdf: Band,
    pub n_train: Band,
}

/// Per-key bands over successful records, keys ascending.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<usize> = records.iter().map(|r| r.iteration_or_n).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .filter_map(|key| {
            let cell: Vec<&ExperimentRecord> = records.iter().filter(|r| r.iteration_or_n == key).collect();
            let ok: Vec<&&ExperimentRecord> = cell.iter().filter(|r| r.status == RecordStatus::Ok).collect();
            let band = |f: fn(&ExperimentRecord) -> f64| Band::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            Some(SummaryRow {
                key,
                count: ok.len(),
                failed: cell.len() - ok.len(),
                e_mse: band(|r| r.e_mse)?,
                e_mse_paper: band(|r| r.e_mse_paper)?,
                e_logpdf: band(|r| r.e_logpdf)?,
                n_train: band(|r| r.n_train as f64)?,
            })
        })
        .collect()
}

/// Extend every run to the longest run by repeating its final record, so that
/// per-iteration bands compare runs that stopped early with their final state.
pub fn carry_forward(records: &[ExperimentRecord]) -> Vec<ExperimentRecord> {
    let last = records.iter().map(|r| r.iteration_or_n).max().unwrap_or(0);
    let mut runs: Vec<usize> = records.iter().map(|r| r.run_id).collect();
    runs.sort_unstable();
    runs.dedup();
    let mut out = Vec::with_capacity(records.len());
    for run in runs {
        let mut own: Vec<&ExperimentRecord> = records.iter().filter(|r| r.run_id == run).collect();
        own.sort_by_key(|r| r.iteration_or_n);
        out.extend(own.iter().map(|r| (*r).clone()));
        if let Some(tail) = own.last() {
            for it in tail.iteration_or_n + 1..=last {
                out.push(ExperimentRecord { iteration_or_n: it, new_count: Some(0), ..(*tail).clone() });
            }
        }
    }
    out
}

/// Test data and the true output PDF it defines.
pub struct Scoring<'a> {
    pub suite: &'a TestSuite,
    pub p_true: &'a DensityEstimate,
}

impl Scoring<'_> {
    pub fn evaluate<S: Surrogate + ?Sized>(&self, model: &S) -> Result<Evaluation> {
        evaluate_surrogate(model, self.suite, self.p_true)
    }
}

/// Train on nested prefixes of each replicate pool and score every fit.
/// Failed fits are recorded and the sweep continues.
pub fn run_sweep<F: SurrogateFactory>(
    spec: &SweepSpec,
    source: PoolSource<'_>,
    factory: &F,
    scoring: &Scoring<'_>,
) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    let per_rep: Vec<Result<Vec<ExperimentRecord>>> = (0..spec.replicates)
        .into_par_iter()
        .map(|rep| {
            let pool = source.draw(spec.seed, rep, spec.max_size())?;
            let (x, y) = (pool.inputs(), pool.outputs());
            let mut out = Vec::with_capacity(spec.sample_sizes.len());
            for &n in &spec.sample_sizes {
                let clock = Instant::now();
                let xs = x.slice(ndarray::s![..n, ..]).to_owned();
                let ys = y.slice(ndarray::s![..n]).to_owned();
                let stream = StreamKey::new(spec.seed, &format!("sweep-{rep}-{n}"));
                let metrics = factory.train(&xs, &ys, &stream).and_then(|m| scoring.evaluate(&m)).ok();
                out.push(ExperimentRecord::new(rep, n, n, metrics, clock.elapsed().as_secs_f64()));
            }
            Ok(out)
        })
        .collect();
    let mut records = Vec::new();
    for r in per_rep {
        records.extend(r?);
    }
    Ok(records)
}

/// One pool-sample score row, for acquisition scatter plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub run_id: usize,
    pub iteration: usize,
    pub index: usize,
    pub log10_w: f64,
    pub log10_var: f64,
    pub chosen: bool,
    pub selected: bool,
}

fn scatter_rows(run_id: usize, iteration: usize, report: &AcquisitionReport, pool: &CandidatePool) -> Vec<ScatterRow> {
    report
        .scores
        .iter()
        .map(|s| ScatterRow {
            run_id,
            iteration,
            index: s.index,
            log10_w: s.w.log10(),
            log10_var: s.variance.log10(),
            chosen: pool.is_chosen(s.index),
            selected: report.selected.contains(&s.index),
        })
        .collect()
}

/// Results of a batch of selection runs.
#[derive(Debug, Clone, Default)]
pub struct FomoBatch {
    /// One record per run and iteration; iteration 0 is the initial subset.
    pub records: Vec<ExperimentRecord>,
    pub outcomes: Vec<RunOutcome>,
    pub chosen: Vec<Vec<usize>>,
    /// The surrogate trained on each whole pool, when requested.
    pub full_pool: Vec<ExperimentRecord>,
    pub scatter: Vec<ScatterRow>,
}

impl FomoBatch {
    pub fn final_records(&self) -> Vec<&ExperimentRecord> {
        let runs = self.outcomes.len();
        (0..runs)
            .filter_map(|run| self.records.iter().filter(|r| r.run_id == run).max_by_key(|r| r.iteration_or_n))
            .collect()
    }

    /// `(run_id, iteration, n_chosen)` rows.
    pub fn trajectories(&self) -> Vec<(usize, usize, usize)> {
        self.records.iter().map(|r| (r.run_id, r.iteration_or_n, r.n_train)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BatchOptions {
    /// Also train and score a surrogate on each whole pool.
    pub full_reference: bool,
    /// Keep every iteration's scores for scatter output.
    pub dump_scores: bool,
    /// Save each run's final model under `dir/run-{r}`.
    pub save_models: Option<PathBuf>,
}

/// Run the selection loop once per replicate, each on its own pool.
/// Replicate `r` uses the same pool as replicate `r` of a sweep with the same seed.
#[allow(clippy::too_many_arguments)]
pub fn run_fomo_batch<F>(
    replicates: usize,
    pool_size: usize,
    seed: u64,
    config: &RunConfig,
    source: PoolSource<'_>,
    factory: &F,
    distribution: &InputDistribution,
    scoring: &Scoring<'_>,
    options: BatchOptions,
) -> Result<FomoBatch>
where
    F: SurrogateFactory,
    F::Model: SaveModel,
{
    if replicates == 0 {
        return Err(FomoError::Config("replicates must be at least 1".into()));
    }
    config.validate(pool_size)?;
    let evaluate = |m: &F::Model| scoring.evaluate(m);
    let per_rep: Vec<Result<FomoBatch>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let pool = source.draw(seed, rep, pool_size)?;
            let mut batch = FomoBatch::default();
            if options.full_reference {
                let clock = Instant::now();
                let stream = StreamKey::new(seed, &format!("full-{rep}"));
                let metrics = factory
                    .train(&pool.inputs(), &pool.outputs(), &stream)
                    .and_then(|m| scoring.evaluate(&m))
                    .ok();
                batch.full_pool.push(ExperimentRecord::new(rep, pool_size, pool_size, metrics, clock.elapsed().as_secs_f64()));
            }
            let mut scatter = Vec::new();
            let mut on_scores = |it: usize, report: &AcquisitionReport, p: &CandidatePool| {
                scatter.extend(scatter_rows(rep, it, report, p));
            };
            let mut hooks = RunHooks { evaluate: Some(&evaluate), on_scores: None };
            if options.dump_scores {
                hooks.on_scores = Some(&mut on_scores);
            }
            let run_config = RunConfig { seed: config.seed.wrapping_add(rep as u64), ..config.clone() };
            let run = fomo_run(pool, &run_config, factory, distribution, &mut hooks)?;
            drop(hooks);
            if let (Some(dir), Some(model)) = (&options.save_models, &run.model) {
                model.save(&dir.join(format!("run-{rep}")))?;
            }
            for h in &run.history {
                let mut rec = ExperimentRecord::new(rep, h.iteration, h.n_chosen, h.metrics, h.wall_time_s);
                rec.new_count = Some(h.new_count);
                batch.records.push(rec);
            }
            batch.outcomes.push(run.outcome);
            batch.chosen.push(run.chosen);
            batch.scatter = scatter;
            Ok(batch)
        })
        .collect();
    let mut out = FomoBatch::default();
    for b in per_rep {
        let b = b?;
        out.records.extend(b.records);
        out.outcomes.extend(b.outcomes);
        out.chosen.extend(b.chosen);
        out.full_pool.extend(b.full_pool);
        out.scatter.extend(b.scatter);
    }
    Ok(out)
}
