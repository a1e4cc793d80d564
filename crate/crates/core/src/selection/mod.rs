//! The selection loop: likelihood ratio, acquisition scores, batch selection and convergence.

use std::cmp::Ordering;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::config::{InitStrategy, RunConfig};
use crate::density::surrogate_output_pdf;
use crate::distribution::InputDistribution;
use crate::error::{FomoError, Result};
use crate::metrics::Evaluation;
use crate::pool::CandidatePool;
use crate::rng::StreamKey;
use crate::surrogate::{Surrogate, SurrogateFactory};
use crate::DensityEstimate;

/// Relative floor on `p_μ` in the likelihood ratio.
pub const PDF_FLOOR: f64 = 1e-12;

/// `p_x / max(p_μ(μ), floor)`.
pub fn likelihood_ratio_value(px: f64, mu: f64, output_pdf: &DensityEstimate) -> f64 {
    let floor = PDF_FLOOR * output_pdf.max_grid_density();
    px / output_pdf.evaluate(mu).max(floor)
}

fn input_density(distribution: &InputDistribution, x: &[f64]) -> f64 {
    if distribution.contains(x) {
        distribution.density_unchecked(x)
    } else {
        0.0
    }
}

pub fn likelihood_ratio<S: Surrogate + ?Sized>(
    x: &[f64],
    distribution: &InputDistribution,
    model: &S,
    output_pdf: &DensityEstimate,
) -> f64 {
    likelihood_ratio_value(input_density(distribution, x), model.predict(x).mean, output_pdf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub index: usize,
    pub w: f64,
    pub variance: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionReport {
    /// One record per pool sample, in pool order.
    pub scores: Vec<ScoreRecord>,
    pub selected: Vec<usize>,
    /// Score of the last selected sample.
    pub front_value: f64,
    pub new_count: usize,
}

/// Indices of the `n_a` largest values, best first; ties go to the lower index.
pub fn top_indices(values: &[f64], n_a: usize) -> Vec<usize> {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| match key(values[b]).partial_cmp(&key(values[a])) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    order.truncate(n_a);
    order
}

/// Score samples from precomputed input densities, means and variances.
pub fn score_samples(
    px: &[f64],
    mean: &[f64],
    variance: &[f64],
    output_pdf: &DensityEstimate,
    n_a: usize,
    chosen: impl Fn(usize) -> bool,
) -> AcquisitionReport {
    let scores: Vec<ScoreRecord> = (0..px.len())
        .map(|i| {
            let w = likelihood_ratio_value(px[i], mean[i], output_pdf);
            let var = variance[i].max(0.0);
            ScoreRecord { index: i, w, variance: var, score: w * var }
        })
        .collect();
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let selected = top_indices(&values, n_a);
    let front_value = selected.last().map_or(f64::NAN, |&i| values[i]);
    let new_count = selected.iter().filter(|&&i| !chosen(i)).count();
    AcquisitionReport { scores, selected, front_value, new_count }
}

/// Score every pool sample, chosen or not, and pick the top `n_a`.
pub fn score_pool<S: Surrogate + ?Sized>(
    pool: &CandidatePool,
    model: &S,
    distribution: &InputDistribution,
    output_pdf: &DensityEstimate,
    n_a: usize,
) -> AcquisitionReport {
    let x = pool.inputs();
    score_inputs(&x, model, distribution, output_pdf, n_a, |i| pool.is_chosen(i))
}

fn score_inputs<S: Surrogate + ?Sized>(
    x: &Array2<f64>,
    model: &S,
    distribution: &InputDistribution,
    output_pdf: &DensityEstimate,
    n_a: usize,
    chosen: impl Fn(usize) -> bool,
) -> AcquisitionReport {
    let px: Vec<f64> = x.rows().into_iter().map(|r| input_density(distribution, &r.to_vec())).collect();
    let (mean, variance) = model.predict_many(x);
    score_samples(
        &px,
        mean.as_slice().expect("contiguous"),
        variance.as_slice().expect("contiguous"),
        output_pdf,
        n_a,
        chosen,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convergence {
    Continue,
    Converged,
    BudgetExhausted,
}

/// Decide after acquisition iteration `iteration` (1-based) given every new-sample count so far.
pub fn convergence_check(new_counts: &[usize], iteration: usize, patience: usize, n_iter_max: usize) -> Convergence {
    let stall = new_counts.iter().rev().take_while(|&&c| c == 0).count();
    if patience > 0 && stall >= patience {
        Convergence::Converged
    } else if iteration >= n_iter_max {
        Convergence::BudgetExhausted
    } else {
        Convergence::Continue
    }
}

/// One row of run history. Iteration 0 is the initial subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub n_chosen: usize,
    pub new_count: usize,
    pub front_value: f64,
    pub metrics: Option<Evaluation>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "detail")]
pub enum RunOutcome {
    Converged,
    BudgetExhausted,
    Failed(String),
}

/// Per-iteration callbacks. Metrics are recorded only, never read back by the loop.
pub struct RunHooks<'a, M> {
    pub evaluate: Option<&'a (dyn Fn(&M) -> Result<Evaluation> + Sync)>,
    pub on_scores: Option<&'a mut dyn FnMut(usize, &AcquisitionReport, &CandidatePool)>,
}

impl<M> Default for RunHooks<'_, M> {
    fn default() -> Self {
        RunHooks { evaluate: None, on_scores: None }
    }
}

/// Loop state for a single run.
pub struct FomoState<M> {
    pub pool: CandidatePool,
    pub iteration: usize,
    pub surrogate: M,
    pub output_pdf: DensityEstimate,
    pub history: Vec<IterationRecord>,
    pub stall_count: usize,
}

pub struct FomoRun<M> {
    /// Last successfully trained surrogate; `None` only if initialization failed.
    pub model: Option<M>,
    pub chosen: Vec<usize>,
    pub history: Vec<IterationRecord>,
    pub outcome: RunOutcome,
}

impl<M> FomoRun<M> {
    pub fn new_counts(&self) -> Vec<usize> {
        self.history.iter().skip(1).map(|r| r.new_count).collect()
    }
}

struct Trained<M> {
    model: M,
    pdf: DensityEstimate,
}

fn train_step<F: SurrogateFactory>(
    factory: &F,
    pool: &CandidatePool,
    indices: Option<&[usize]>,
    distribution: &InputDistribution,
    config: &RunConfig,
    stream: &StreamKey,
    tag: &str,
) -> Result<Trained<F::Model>> {
    let (x, y) = match indices {
        Some(ix) => (pool.inputs_of(ix.iter().copied()), pool.outputs_of(ix.iter().copied())),
        None => (pool.inputs(), pool.outputs()),
    };
    let model = factory.train(&x, &y, &stream.child(&format!("train-{tag}")))?;
    let pdf = surrogate_output_pdf(
        &model,
        distribution,
        config.pdf_sample_count,
        config.pdf_design,
        &mut stream.child(&format!("pdf-{tag}")).rng(),
    )?;
    Ok(Trained { model, pdf })
}

fn evaluate<M>(hooks: &RunHooks<'_, M>, model: &M) -> Option<Evaluation> {
    // A failed metric evaluation leaves the record without metrics; selection never sees them.
    hooks.evaluate.and_then(|f| f(model).ok())
}

/// Choose the initial subset.
fn initial_subset<F: SurrogateFactory>(
    pool: &CandidatePool,
    config: &RunConfig,
    factory: &F,
    distribution: &InputDistribution,
    stream: &StreamKey,
) -> Result<Vec<usize>> {
    let n_init = config.n_init();
    match config.init {
        InitStrategy::Random => {
            let mut rng = stream.child("init").rng();
            let mut ix = sample(&mut rng, pool.len(), n_init).into_vec();
            ix.sort_unstable();
            Ok(ix)
        }
        InitStrategy::FullData => {
            let full = train_step(factory, pool, None, distribution, config, stream, "full")?;
            let x = pool.inputs();
            let mu = full.model.predict_mean_many(&x);
            let w: Vec<f64> = x
                .rows()
                .into_iter()
                .zip(&mu)
                .map(|(r, &m)| likelihood_ratio_value(input_density(distribution, &r.to_vec()), m, &full.pdf))
                .collect();
            Ok(top_indices(&w, n_init))
        }
    }
}

/// Run the selection loop on a fixed pool.
///
/// Configuration problems return `Err`; failures after the run starts are reported
/// in `FomoRun::outcome` with the history gathered so far.
pub fn fomo_run<F: SurrogateFactory>(
    pool: CandidatePool,
    config: &RunConfig,
    factory: &F,
    distribution: &InputDistribution,
    hooks: &mut RunHooks<'_, F::Model>,
) -> Result<FomoRun<F::Model>> {
    config.validate(pool.len())?;
    if pool.dim() != distribution.dim() {
        return Err(FomoError::InvalidInput(format!(
            "pool has {} inputs but distribution has {}",
            pool.dim(),
            distribution.dim()
        )));
    }
    let stream = StreamKey::new(config.seed, "fomo");
    let clock = Instant::now();
    let mut pool = pool.with_chosen(std::iter::empty())?;

    let failed = |history: Vec<IterationRecord>, model: Option<F::Model>, pool: &CandidatePool, e: FomoError| {
        Ok(FomoRun {
            model,
            chosen: pool.chosen().iter().copied().collect(),
            history,
            outcome: RunOutcome::Failed(e.to_string()),
        })
    };

    let init = match initial_subset(&pool, config, factory, distribution, &stream) {
        Ok(ix) => ix,
        Err(e) => return failed(Vec::new(), None, &pool, e),
    };
    let added = pool.add_chosen(init.iter().copied())?;
    let chosen: Vec<usize> = pool.chosen().iter().copied().collect();
    let trained = match train_step(factory, &pool, Some(&chosen), distribution, config, &stream, "0") {
        Ok(t) => t,
        Err(e) => return failed(Vec::new(), None, &pool, e),
    };
    let mut state = FomoState {
        pool,
        iteration: 0,
        surrogate: trained.model,
        output_pdf: trained.pdf,
        history: Vec::new(),
        stall_count: 0,
    };
    state.history.push(IterationRecord {
        iteration: 0,
        n_chosen: state.pool.chosen().len(),
        new_count: added,
        front_value: f64::NAN,
        metrics: evaluate(hooks, &state.surrogate),
        wall_time_s: clock.elapsed().as_secs_f64(),
    });

    let mut new_counts = Vec::new();
    loop {
        state.iteration += 1;
        let report = score_pool(&state.pool, &state.surrogate, distribution, &state.output_pdf, config.n_a);
        if let Some(cb) = hooks.on_scores.as_mut() {
            cb(state.iteration, &report, &state.pool);
        }
        let added = state.pool.add_chosen(report.selected.iter().copied())?;
        debug_assert_eq!(added, report.new_count);
        new_counts.push(added);
        state.stall_count = if added == 0 { state.stall_count + 1 } else { 0 };

        // A deterministic factory would reproduce the same model from the same data.
        if added > 0 || !factory.is_deterministic() {
            let chosen: Vec<usize> = state.pool.chosen().iter().copied().collect();
            let tag = state.iteration.to_string();
            match train_step(factory, &state.pool, Some(&chosen), distribution, config, &stream, &tag) {
                Ok(t) => {
                    state.surrogate = t.model;
                    state.output_pdf = t.pdf;
                }
                Err(e) => {
                    let FomoState { pool, surrogate, history, .. } = state;
                    return failed(history, Some(surrogate), &pool, e);
                }
            }
        }
        state.history.push(IterationRecord {
            iteration: state.iteration,
            n_chosen: state.pool.chosen().len(),
            new_count: added,
            front_value: report.front_value,
            metrics: evaluate(hooks, &state.surrogate),
            wall_time_s: clock.elapsed().as_secs_f64(),
        });

        match convergence_check(&new_counts, state.iteration, config.convergence_patience, config.n_iter_max) {
            Convergence::Continue => {}
            done => {
                let outcome = if done == Convergence::Converged {
                    RunOutcome::Converged
                } else {
                    RunOutcome::BudgetExhausted
                };
                return Ok(FomoRun {
                    model: Some(state.surrogate),
                    chosen: state.pool.chosen().iter().copied().collect(),
                    history: state.history,
                    outcome,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests;
