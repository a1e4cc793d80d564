use super::*;
use crate::density::{fit_kde, fit_kde_with_bandwidth};
use crate::gp::GpFactory;
use crate::problems::Piecewise1D;
use crate::rng::seeded_rng;
use crate::surrogate::Prediction;
use crate::config::PdfDesign;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;

/// Fixed mean, variance = squared distance to the nearest training input.
struct NearestModel {
    train: Vec<f64>,
}

impl Surrogate for NearestModel {
    fn input_dim(&self) -> usize {
        1
    }

    fn predict(&self, x: &[f64]) -> Prediction {
        let d = self.train.iter().map(|t| (t - x[0]).powi(2)).fold(f64::INFINITY, f64::min);
        Prediction { mean: x[0].sin() + 0.3 * x[0], variance: d }
    }
}

struct NearestFactory;

impl SurrogateFactory for NearestFactory {
    type Model = NearestModel;

    fn train(&self, x: &Array2<f64>, _y: &Array1<f64>, _stream: &StreamKey) -> Result<NearestModel> {
        Ok(NearestModel { train: x.column(0).to_vec() })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Variance is a stream-dependent hash of the input: arbitrary selections every iteration.
struct NoisyModel {
    salt: u64,
}

impl Surrogate for NoisyModel {
    fn input_dim(&self) -> usize {
        1
    }

    fn predict(&self, x: &[f64]) -> Prediction {
        let mut h = x[0].to_bits() ^ self.salt;
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51afd7ed558ccd);
        h ^= h >> 33;
        Prediction { mean: x[0], variance: (h >> 11) as f64 / (1u64 << 53) as f64 }
    }
}

struct NoisyFactory;

impl SurrogateFactory for NoisyFactory {
    type Model = NoisyModel;

    fn train(&self, _x: &Array2<f64>, _y: &Array1<f64>, stream: &StreamKey) -> Result<NoisyModel> {
        Ok(NoisyModel { salt: stream.rng().random() })
    }
}

/// Sample at x = 0 has an isolated mean and a huge variance.
struct AttractorModel;

impl Surrogate for AttractorModel {
    fn input_dim(&self) -> usize {
        1
    }

    fn predict(&self, x: &[f64]) -> Prediction {
        if x[0] == 0.0 {
            Prediction { mean: 0.0, variance: 1e6 }
        } else {
            Prediction { mean: 100.0 + x[0], variance: 1.0 }
        }
    }
}

struct AttractorFactory;

impl SurrogateFactory for AttractorFactory {
    type Model = AttractorModel;

    fn train(&self, _x: &Array2<f64>, _y: &Array1<f64>, _stream: &StreamKey) -> Result<AttractorModel> {
        Ok(AttractorModel)
    }
}

fn index_pool(n: usize) -> (CandidatePool, InputDistribution) {
    let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
    let y = x.column(0).to_owned();
    let dist = InputDistribution::uniform(vec![0.0], vec![n as f64]).unwrap();
    (CandidatePool::from_arrays(&x, &y).unwrap(), dist)
}

fn small_config(n_a: usize) -> RunConfig {
    RunConfig { n_a, n_iter_max: 50, pdf_sample_count: 1000, seed: 11, ..RunConfig::default() }
}

#[test]
fn matched_densities_give_unit_ratio() {
    let pdf = fit_kde(&[0.0, 1.0, 3.0], &[1.0; 3]).unwrap();
    for mu in [0.0, 0.5, 2.0] {
        let px = pdf.evaluate(mu);
        assert_eq!(likelihood_ratio_value(px, mu, &pdf), 1.0);
    }
}

#[test]
fn rarer_outputs_get_larger_ratio() {
    let pdf = fit_kde_with_bandwidth(&[0.0, 0.0], &[1.0, 1.0], 1.0).unwrap();
    let ws: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 3.0].iter().map(|&m| likelihood_ratio_value(0.2, m, &pdf)).collect();
    assert!(ws.windows(2).all(|w| w[1] > w[0]), "{ws:?}");
    // Far outside the support the floor keeps w finite.
    assert!(likelihood_ratio_value(0.2, 1e6, &pdf).is_finite());
}

struct Identity;

impl Surrogate for Identity {
    fn input_dim(&self) -> usize {
        1
    }

    fn predict(&self, x: &[f64]) -> Prediction {
        Prediction { mean: x[0], variance: 1.0 }
    }
}

#[test]
fn gaussian_identity_ratio_near_one() {
    let dist = InputDistribution::standard_normal(1, 6.0);
    let pdf = crate::density::surrogate_output_pdf(&Identity, &dist, 100_000, PdfDesign::Box, &mut seeded_rng(1, "w")).unwrap();
    let w = likelihood_ratio(&[0.0], &dist, &Identity, &pdf);
    assert!((w - 1.0).abs() < 0.1, "w(0) = {w}");
}

#[test]
fn zero_variance_never_beats_positive() {
    let pdf = fit_kde(&[0.0, 1.0], &[1.0; 2]).unwrap();
    let r = score_samples(&[1.0; 4], &[0.0, 0.5, 1.0, 0.2], &[0.0, 1e-30, 0.0, 2.0], &pdf, 2, |_| false);
    assert_eq!(r.scores[0].score, 0.0);
    assert_eq!(r.selected, vec![3, 1]);
}

#[test]
fn full_selection_sorts_everything() {
    let pdf = fit_kde(&[0.0, 1.0], &[1.0; 2]).unwrap();
    let var = [0.3, 0.1, 0.3, 0.9, 0.0];
    let r = score_samples(&[1.0; 5], &[0.5; 5], &var, &pdf, 5, |_| false);
    assert_eq!(r.selected, vec![3, 0, 2, 1, 4]);
    assert_eq!(r.front_value, 0.0);
}

#[test]
fn remaining_below_chosen_gives_no_new_samples() {
    let pdf = fit_kde(&[0.0, 1.0], &[1.0; 2]).unwrap();
    let var = [5.0, 4.0, 0.1, 0.2, 0.05];
    let r = score_samples(&[1.0; 5], &[0.5; 5], &var, &pdf, 2, |i| i < 2);
    assert_eq!(r.selected, vec![0, 1]);
    assert_eq!(r.new_count, 0);
}

#[test]
fn convergence_rules() {
    assert_eq!(convergence_check(&[5, 0, 0], 3, 3, 100), Convergence::Continue);
    assert_eq!(convergence_check(&[5, 0, 0, 0], 4, 3, 100), Convergence::Converged);
    assert_eq!(convergence_check(&[0, 0, 4, 0], 4, 3, 100), Convergence::Continue);
    assert_eq!(convergence_check(&[3, 2], 2, 3, 2), Convergence::BudgetExhausted);
}

#[test]
fn single_attractor_stalls() {
    let (pool, dist) = index_pool(20);
    let config = RunConfig { n_a: 1, n_init: Some(1), ..small_config(1) };
    let run = fomo_run(pool, &config, &AttractorFactory, &dist, &mut RunHooks::default()).unwrap();
    assert_eq!(run.chosen, vec![0]);
    assert_eq!(run.new_counts(), vec![0, 0, 0]);
    assert_eq!(run.outcome, RunOutcome::Converged);
}

#[test]
fn budget_of_one_records_init_and_one_step() {
    let (pool, dist) = index_pool(30);
    let config = RunConfig { n_iter_max: 1, ..small_config(3) };
    let run = fomo_run(pool, &config, &NearestFactory, &dist, &mut RunHooks::default()).unwrap();
    assert_eq!(run.history.len(), 2);
    assert_eq!(run.outcome, RunOutcome::BudgetExhausted);
}

#[test]
fn random_init_strategy() {
    let (pool, dist) = index_pool(30);
    let config = RunConfig { init: InitStrategy::Random, n_init: Some(4), ..small_config(3) };
    let run = fomo_run(pool, &config, &NearestFactory, &dist, &mut RunHooks::default()).unwrap();
    assert_eq!(run.history[0].n_chosen, 4);
}

#[test]
fn rejects_bad_runs() {
    let (pool, dist) = index_pool(10);
    let config = RunConfig { n_init: Some(11), ..small_config(2) };
    assert!(fomo_run(pool.clone(), &config, &NearestFactory, &dist, &mut RunHooks::default()).is_err());
    let wrong = InputDistribution::standard_normal(2, 6.0);
    assert!(fomo_run(pool, &small_config(2), &NearestFactory, &wrong, &mut RunHooks::default()).is_err());
}

struct FailingFactory;

impl SurrogateFactory for FailingFactory {
    type Model = NearestModel;

    fn train(&self, x: &Array2<f64>, _y: &Array1<f64>, _stream: &StreamKey) -> Result<NearestModel> {
        if x.nrows() > 6 {
            Err(FomoError::TrainingDiverged { member: 0 })
        } else {
            Ok(NearestModel { train: x.column(0).to_vec() })
        }
    }
}

#[test]
fn training_failure_keeps_partial_history() {
    let (pool, dist) = index_pool(40);
    let config = RunConfig { init: InitStrategy::Random, n_init: Some(2), ..small_config(2) };
    let run = fomo_run(pool, &config, &FailingFactory, &dist, &mut RunHooks::default()).unwrap();
    assert!(matches!(run.outcome, RunOutcome::Failed(_)));
    assert_eq!(run.history.len(), 3);
    assert!(run.model.is_some());
}

#[test]
fn score_hook_sees_every_iteration() {
    let (pool, dist) = index_pool(25);
    let mut seen = Vec::new();
    let mut cb = |it: usize, r: &AcquisitionReport, p: &CandidatePool| {
        assert_eq!(r.scores.len(), p.len());
        seen.push(it);
    };
    let mut hooks = RunHooks { evaluate: None, on_scores: Some(&mut cb) };
    let run = fomo_run(pool, &small_config(4), &NearestFactory, &dist, &mut hooks).unwrap();
    assert_eq!(seen.len(), run.history.len() - 1);
}

fn check_history(run: &FomoRun<impl Surrogate>, config: &RunConfig) {
    let h = &run.history;
    assert!(h.len() <= config.n_iter_max + 1);
    for pair in h.windows(2) {
        assert!(pair[1].n_chosen >= pair[0].n_chosen);
        assert_eq!(pair[1].n_chosen - pair[0].n_chosen, pair[1].new_count);
    }
    assert_eq!(h.last().unwrap().n_chosen, run.chosen.len());
    let counts = run.new_counts();
    match run.outcome {
        RunOutcome::Converged => {
            assert!(counts.iter().rev().take(config.convergence_patience).all(|&c| c == 0));
        }
        RunOutcome::BudgetExhausted => assert_eq!(counts.len(), config.n_iter_max),
        RunOutcome::Failed(_) => panic!("mock runs never fail"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_front_separates(
        levels in prop::collection::vec(0u8..6, 1..40),
        n_a in 1usize..10,
    ) {
        let pdf = fit_kde(&[0.0, 1.0], &[1.0; 2]).unwrap();
        let n = levels.len();
        let var: Vec<f64> = levels.iter().map(|&l| l as f64 * 0.25).collect();
        let r = score_samples(&vec![1.0; n], &vec![0.5; n], &var, &pdf, n_a, |_| false);
        prop_assert_eq!(r.selected.len(), n_a.min(n));
        for i in 0..n {
            let s = r.scores[i].score;
            if r.selected.contains(&i) {
                prop_assert!(s >= r.front_value);
            } else {
                prop_assert!(s <= r.front_value);
                if s == r.front_value {
                    // Ties go to lower indices.
                    prop_assert!(r.selected.iter().filter(|&&j| r.scores[j].score == s).all(|&j| j < i));
                }
            }
        }
    }

    #[test]
    fn rescaling_px_keeps_selection(
        // Power-of-two densities times odd (or zero) variances: exact ties only between identical pairs.
        levels in prop::collection::vec((0u32..4, prop::sample::select(vec![0.0, 1.0, 3.0, 5.0, 7.0])), 1..40),
        n_a in 1usize..10,
        c in 0.01f64..100.0,
    ) {
        let pdf = fit_kde(&[0.0, 2.0, 3.0], &[1.0; 3]).unwrap();
        let n = levels.len();
        let px: Vec<f64> = levels.iter().map(|&(p, _)| (1u32 << p) as f64).collect();
        let var: Vec<f64> = levels.iter().map(|&(_, v)| v).collect();
        let mean = vec![1.0; n];
        let a = score_samples(&px, &mean, &var, &pdf, n_a, |_| false);
        let scaled: Vec<f64> = px.iter().map(|p| p * c).collect();
        let b = score_samples(&scaled, &mean, &var, &pdf, n_a, |_| false);
        prop_assert_eq!(&a.selected, &b.selected);
        for (x, y) in a.scores.iter().zip(&b.scores) {
            prop_assert!((y.w - c * x.w).abs() <= 1e-12 * y.w.abs());
            prop_assert!((y.score - c * x.score).abs() <= 1e-12 * y.score.abs().max(1e-300));
        }
    }

    #[test]
    fn runs_terminate_with_consistent_history(
        n in 5usize..40,
        n_a in 1usize..6,
        patience in 1usize..4,
        n_iter_max in 1usize..15,
        seed in 0u64..1000,
        noisy in any::<bool>(),
    ) {
        let (pool, dist) = index_pool(n);
        let config = RunConfig {
            n_a,
            n_init: Some(n_a.min(n)),
            n_iter_max,
            convergence_patience: patience,
            seed,
            pdf_sample_count: 1000,
            ..RunConfig::default()
        };
        if noisy {
            let run = fomo_run(pool, &config, &NoisyFactory, &dist, &mut RunHooks::default()).unwrap();
            check_history(&run, &config);
        } else {
            let run = fomo_run(pool, &config, &NearestFactory, &dist, &mut RunHooks::default()).unwrap();
            check_history(&run, &config);
        }
    }
}

fn history_bits(run: &FomoRun<impl Surrogate>) -> Vec<(usize, usize, usize, u64)> {
    run.history.iter().map(|r| (r.iteration, r.n_chosen, r.new_count, r.front_value.to_bits())).collect()
}

#[test]
fn gp_run_is_reproducible() {
    let mut rng = seeded_rng(4, "pool");
    let x = Array2::from_shape_fn((25, 1), |_| rng.random_range(-6.0..6.0));
    let f = Piecewise1D::<f64>::default();
    let y = x.column(0).mapv(|v| f.eval(v));
    let pool = CandidatePool::from_arrays(&x, &y).unwrap();
    let dist = InputDistribution::standard_normal(1, 6.0);
    let config = RunConfig { n_a: 2, n_init: Some(3), n_iter_max: 8, pdf_sample_count: 2000, seed: 9, ..RunConfig::default() };
    let factory = GpFactory::default();
    let a = fomo_run(pool.clone(), &config, &factory, &dist, &mut RunHooks::default()).unwrap();
    let b = fomo_run(pool, &config, &factory, &dist, &mut RunHooks::default()).unwrap();
    assert_eq!(a.chosen, b.chosen);
    assert_eq!(history_bits(&a), history_bits(&b));
    assert_eq!(a.model.unwrap(), b.model.unwrap());
}
