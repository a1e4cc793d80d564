use super::*;
use crate::density::fit_kde_with_bandwidth;
use crate::problems::Piecewise1D;
use crate::rng::seeded_rng;
use proptest::prelude::*;

#[test]
fn mse_hand_cases() {
    let y = [1.0, 2.0];
    assert_eq!(normalized_mse(&y, &y, false).unwrap(), 0.0);
    assert_eq!(normalized_mse(&y, &[1.0, 1.0], false).unwrap(), 0.2);
    let y = [3.0, -1.0, 0.5, 2.0];
    assert_eq!(normalized_mse(&y, &[0.0; 4], false).unwrap(), 1.0);
    assert_eq!(normalized_mse(&y, &[0.0; 4], true).unwrap(), 1.0 / 3.0);
}

#[test]
fn mse_errors() {
    assert!(matches!(normalized_mse(&[0.0, 0.0], &[1.0, 1.0], false), Err(FomoError::UndefinedNormalization)));
    assert!(normalized_mse(&[], &[], false).is_err());
    assert!(normalized_mse(&[1.0], &[1.0, 2.0], false).is_err());
}

#[test]
fn mse_vanishes_quadratically() {
    let y = [1.0, -2.0, 0.3, 4.0];
    let err = |eps: f64| {
        let pred: Vec<f64> = y.iter().map(|v| v + eps).collect();
        normalized_mse(&y, &pred, false).unwrap()
    };
    let ratio = err(1e-3) / err(5e-4);
    assert!((ratio - 4.0).abs() < 1e-6);
}

proptest! {
    #[test]
    fn mse_permutation_invariant(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..30),
        seed in 0u64..1000,
    ) {
        prop_assume!(pairs.iter().any(|p| p.0 != 0.0));
        let (y, m): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let mut idx: Vec<usize> = (0..y.len()).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut seeded_rng(seed, "perm"));
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let mp: Vec<f64> = idx.iter().map(|&i| m[i]).collect();
        let a = normalized_mse(&y, &m, false).unwrap();
        let b = normalized_mse(&yp, &mp, false).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }
}

fn kde(data: &[f64], weights: &[f64]) -> Result<DensityEstimate> {
    fit_kde(data, weights)
}

fn kde_h(data: &[f64], weights: &[f64], h: f64) -> Result<DensityEstimate> {
    fit_kde_with_bandwidth(data, weights, h)
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[test]
fn identical_estimates_have_zero_error() {
    let p = kde(&[0.0, 1.0, 1.5, 4.0], &[1.0, 2.0, 1.0, 0.5]).unwrap();
    assert_eq!(log_pdf_error(&p, &p.clone()), 0.0);
}

#[test]
fn error_grows_with_shift() {
    let data = [0.0, 0.4, 1.0, 2.2];
    let p = kde(&data, &[1.0; 4]).unwrap();
    let h = p.bandwidth();
    let mut last = -1.0;
    for i in 0..=20 {
        let delta = 2.0 * h * i as f64 / 20.0;
        let shifted: Vec<f64> = data.iter().map(|d| d + delta).collect();
        let q = kde_h(&shifted, &[1.0; 4], h).unwrap();
        let e = log_pdf_error(&p, &q);
        assert!(e > last || (i == 0 && e == 0.0), "delta {delta}: {e} <= {last}");
        last = e;
    }
}

#[test]
fn matches_fine_quadrature() {
    let p = kde_h(&[0.0, 1.0], &[1.0, 1.0], 0.5).unwrap();
    let q = kde_h(&[0.3, 2.0], &[3.0, 1.0], 0.7).unwrap();
    let dens_p = |y: f64| 0.5 * (phi(y / 0.5) + phi((y - 1.0) / 0.5)) / 0.5;
    let dens_q = |y: f64| (0.75 * phi((y - 0.3) / 0.7) + 0.25 * phi((y - 2.0) / 0.7)) / 0.7;
    // Same domain and floor as the estimator: union of [min - 3h, max + 3h].
    let lo = (0.0 - 1.5f64).min(0.3 - 2.1);
    let hi = (1.0 + 1.5f64).max(2.0 + 2.1);
    let n = 1usize << 20;
    let floor = 1e-12 * p.max_grid_density().max(q.max_grid_density());
    let dy = (hi - lo) / (n - 1) as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let y = lo + dy * i as f64;
        let f = (dens_p(y).max(floor).log10() - dens_q(y).max(floor).log10()).abs();
        acc += if i == 0 || i == n - 1 { 0.5 * f } else { f };
    }
    let oracle = acc * dy;
    let got = log_pdf_error(&p, &q);
    assert!(((got - oracle) / oracle).abs() < 1e-3, "{got} vs {oracle}");
}

#[test]
fn log_pdf_error_symmetric_and_finite() {
    let p = kde(&[0.0, 0.1, 0.2], &[1.0; 3]).unwrap();
    let q = kde(&[500.0, 501.0], &[1.0; 2]).unwrap();
    let a = log_pdf_error(&p, &q);
    let b = log_pdf_error(&q, &p);
    assert!(a.is_finite() && a > 0.0);
    assert_eq!(a, b);
}

fn gp_distribution() -> InputDistribution {
    InputDistribution::standard_normal(1, 6.0)
}

#[test]
fn suite_bookkeeping_and_determinism() {
    let f = Piecewise1D::<f64>::default();
    let sizes = SuiteSizes { pdf: 100, lhs: 100 };
    let a = build_test_suite(&f, &gp_distribution(), sizes, SuiteDesign::Uniform, &mut seeded_rng(1, "suite")).unwrap();
    assert_eq!(a.y_pdf.len() + a.y_lhs.len(), 200);
    assert!(a.y_pdf.iter().chain(&a.y_lhs).all(|v| v.is_finite()));
    for (x, y) in a.x_lhs.column(0).iter().zip(&a.y_lhs) {
        assert_eq!(*y, f.eval(*x));
    }
    let b = build_test_suite(&f, &gp_distribution(), sizes, SuiteDesign::Uniform, &mut seeded_rng(1, "suite")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn suite_roundtrip_on_disk() {
    let f = Piecewise1D::<f64>::default();
    let sizes = SuiteSizes { pdf: 30, lhs: 40 };
    let suite = build_test_suite(&f, &gp_distribution(), sizes, SuiteDesign::Lhs, &mut seeded_rng(2, "suite")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(!TestSuite::exists(dir.path()));
    suite.save(dir.path()).unwrap();
    assert!(TestSuite::exists(dir.path()));
    assert_eq!(TestSuite::load(dir.path()).unwrap(), suite);
}
