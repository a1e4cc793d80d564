use super::*;
use crate::rng::seeded_rng;
use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use ndarray::{array, Array1, Array2};
use rand::Rng;

fn hyper1(s2: f64, l: f64, m0: f64) -> GpHyperparams<f64> {
    GpHyperparams { signal_variance: s2, lengthscales: vec![l], noise_variance: 0.0, mean_constant: m0 }
}

fn random_problem(rng: &mut impl Rng, n: usize, d: usize) -> (GpHyperparams<f64>, Array2<f64>, Array1<f64>) {
    let hyper = GpHyperparams {
        signal_variance: rng.random_range(0.5..2.0),
        lengthscales: (0..d).map(|_| rng.random_range(0.5..2.0)).collect(),
        noise_variance: 0.0,
        mean_constant: rng.random_range(-1.0..1.0),
    };
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-3.0..3.0));
    let y = Array1::from_shape_fn(n, |_| rng.random_range(-2.0..2.0));
    (hyper, x, y)
}

/// Direct evaluation of the posterior equations with an LU inverse.
fn dense_posterior(model: &GpModel<f64>, q: &[f64]) -> (f64, f64) {
    let x = model.train_inputs();
    let n = x.nrows();
    let k = model.covariance();
    let kmat = DMatrix::from_fn(n, n, |i, j| k[[i, j]]);
    let kinv = kmat.try_inverse().expect("invertible");
    let h = model.hyper();
    let ks = DVector::from_fn(n, |i, _| kernel(x.row(i), ndarray::ArrayView1::from(q), h));
    let r = DVector::from_fn(n, |i, _| model.train_outputs()[i] - h.mean_constant);
    let mean = h.mean_constant + (ks.transpose() * &kinv * r)[(0, 0)];
    let var = h.signal_variance - (ks.transpose() * &kinv * &ks)[(0, 0)];
    (mean, var)
}

#[test]
fn kernel_values() {
    let h = hyper1(1.7, 1.0, 0.0);
    assert_eq!(kernel(array![0.3].view(), array![0.3].view(), &h), 1.7);
    let h = hyper1(1.0, 1.0, 0.0);
    let k = kernel(array![0.0].view(), array![2f64.sqrt()].view(), &h);
    assert_relative_eq!(k, (-1.0f64).exp(), max_relative = 1e-15);
    assert!((k - 0.367879).abs() < 1e-6);
}

#[test]
fn kernel_symmetric() {
    let mut rng = seeded_rng(1, "kernel");
    let h = GpHyperparams { signal_variance: 1.3, lengthscales: vec![0.7, 2.0, 1.1], noise_variance: 0.0, mean_constant: 0.0 };
    for _ in 0..100 {
        let a = Array1::from_shape_fn(3, |_| rng.random_range(-5.0..5.0));
        let b = Array1::from_shape_fn(3, |_| rng.random_range(-5.0..5.0));
        assert_eq!(kernel(a.view(), b.view(), &h), kernel(b.view(), a.view(), &h));
    }
}

#[test]
fn interpolates_training_points() {
    let x = array![[-2.0], [-0.5], [0.7], [1.5], [3.0]];
    let y = array![0.3, -1.0, 0.4, 1.2, 0.0];
    let m = GpModel::condition(hyper1(1.0, 1.0, 0.1), x.clone(), y.clone()).unwrap();
    for i in 0..5 {
        let (mean, var) = m.predict(x.row(i));
        assert!((mean - y[i]).abs() < 1e-8, "{mean} vs {}", y[i]);
        assert!(var <= 1e-8);
    }
}

#[test]
fn reverts_to_prior_far_away() {
    let x = array![[-1.0], [0.0], [1.0]];
    let y = array![0.5, 2.0, -1.0];
    let m = GpModel::condition(hyper1(2.0, 0.5, 0.3), x, y).unwrap();
    let (mean, var) = m.predict(array![25.0].view());
    assert!((mean - 0.3).abs() < 1e-6);
    assert!((var - 2.0).abs() < 1e-6);
}

#[test]
fn cholesky_matches_dense_inverse() {
    let mut rng = seeded_rng(2, "dense");
    for _ in 0..20 {
        let (h, x, y) = random_problem(&mut rng, 3, 1);
        let m = GpModel::condition(h, x, y).unwrap();
        for _ in 0..10 {
            let q = [rng.random_range(-4.0..4.0)];
            let (mean, var) = m.predict_unclamped(ndarray::ArrayView1::from(&q[..]));
            let (dm, dv) = dense_posterior(&m, &q);
            assert!((mean - dm).abs() < 1e-8);
            assert!((var - dv).abs() < 1e-8);
        }
    }
}

#[test]
fn factor_reconstructs_covariance() {
    let mut rng = seeded_rng(3, "chol");
    let (h, x, y) = random_problem(&mut rng, 12, 2);
    let m = GpModel::condition(h, x, y).unwrap();
    let k = m.covariance();
    let l = m.chol_factor();
    let diff = &l.dot(&l.t()) - &k;
    let rel = diff.iter().map(|v| v * v).sum::<f64>().sqrt() / k.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(rel < 1e-10, "{rel}");
}

#[test]
fn single_point_evidence() {
    let h = GpHyperparams { signal_variance: 1e-14, lengthscales: vec![1.0], noise_variance: 1.0, mean_constant: 0.4 };
    let (v, _) = log_evidence(&h, &array![[0.0]], &array![0.4]).unwrap();
    assert_relative_eq!(v, -0.5 * (2.0 * std::f64::consts::PI).ln(), max_relative = 1e-12);
}

fn theta_of(h: &GpHyperparams<f64>) -> Vec<f64> {
    std::iter::once(h.signal_variance.ln()).chain(h.lengthscales.iter().map(|l| l.ln())).collect()
}

fn with_theta(h: &GpHyperparams<f64>, t: &[f64]) -> GpHyperparams<f64> {
    GpHyperparams { signal_variance: t[0].exp(), lengthscales: t[1..].iter().map(|v| v.exp()).collect(), ..h.clone() }
}

#[test]
fn evidence_gradient_matches_finite_differences() {
    let mut rng = seeded_rng(4, "grad");
    for _ in 0..20 {
        let (mut h, x, y) = random_problem(&mut rng, 6, 2);
        h.noise_variance = 0.05;
        let (_, g) = log_evidence(&h, &x, &y).unwrap();
        let t = theta_of(&h);
        for k in 0..t.len() {
            let step = 1e-5;
            let mut tp = t.clone();
            tp[k] += step;
            let mut tm = t.clone();
            tm[k] -= step;
            let fp = log_evidence(&with_theta(&h, &tp), &x, &y).unwrap().0;
            let fm = log_evidence(&with_theta(&h, &tm), &x, &y).unwrap().0;
            let fd = (fp - fm) / (2.0 * step);
            let rel = (g[k] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel <= 1e-5, "component {k}: analytic {} vs fd {fd}", g[k]);
        }
    }
}

#[test]
fn duplicate_observation_adds_its_log_predictive_density() {
    let mut rng = seeded_rng(5, "dup");
    for _ in 0..50 {
        let (mut h, x, y) = random_problem(&mut rng, 5, 1);
        h.noise_variance = rng.random_range(1.0 / (2.0 * std::f64::consts::PI)..2.0);
        let i = rng.random_range(0..5);
        let mut x2 = x.clone();
        x2.push_row(x.row(i)).unwrap();
        let mut y2 = y.to_vec();
        y2.push(y[i]);
        let y2 = Array1::from(y2);
        let before = log_evidence(&h, &x, &y).unwrap().0;
        let after = log_evidence(&h, &x2, &y2).unwrap().0;
        let m = GpModel::condition(h.clone(), x.clone(), y.clone()).unwrap();
        let (mu, var) = m.predict(x.row(i));
        let s2 = var + h.noise_variance;
        let log_pred = -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (y[i] - mu).powi(2) / (2.0 * s2);
        assert!((after - before - log_pred).abs() < 1e-8);
        assert!(after <= before + 1e-12);
    }
}

#[test]
fn duplicate_rows_without_noise_fail() {
    let x = array![[0.0], [1.0], [1.0]];
    let y = array![0.0, 1.0, 1.0];
    let err = GpModel::condition(hyper1(1.0, 1.0, 0.0), x.clone(), y.clone()).unwrap_err();
    assert!(matches!(err, FomoError::IllConditioned { .. }));
    let err = fit(&x, &y, &GpFitOptions::default(), &mut seeded_rng(0, "dup")).unwrap_err();
    assert!(matches!(err, FomoError::IllConditioned { .. }));
}

#[test]
fn constant_data_predicts_constant() {
    let x = array![[-2.0], [-1.0], [0.5], [2.0], [3.5]];
    let y = Array1::from_elem(5, 1.75f64);
    let m = fit(&x, &y, &GpFitOptions::default(), &mut seeded_rng(6, "const")).unwrap();
    assert_eq!(m.hyper().mean_constant, 1.75);
    for q in [-5.0, 0.0, 1.3, 9.0] {
        let (mean, _) = m.predict(array![q].view());
        assert!((mean - 1.75).abs() < 1e-12);
    }
}

#[test]
fn recovers_generating_lengthscale() {
    let mut logs = Vec::new();
    for seed in 0..20 {
        let mut rng = seeded_rng(seed, "recover");
        let n = 20;
        let x = Array2::from_shape_fn((n, 1), |_| rng.random_range(-5.0..5.0));
        let truth = hyper1(1.0, 1.0, 0.0);
        let mut k = gram(&x, &truth);
        for i in 0..n {
            k[[i, i]] += 1e-10;
        }
        let l = cholesky(&k).unwrap();
        let z = Array1::from_shape_fn(n, |_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng));
        let y = l.dot(&z);
        let m = fit(&x, &y, &GpFitOptions::default(), &mut rng).unwrap();
        logs.push(m.hyper().lengthscales[0].ln());
    }
    logs.sort_by(f64::total_cmp);
    let median = 0.5 * (logs[9] + logs[10]);
    assert!(median.abs() <= 0.5, "median log-lengthscale {median}, all {logs:?}");
}

#[test]
fn fitted_variance_nonnegative() {
    let mut rng = seeded_rng(7, "var");
    let x = Array2::from_shape_fn((25, 1), |_| rng.random_range(-6.0f64..6.0));
    let y = x.column(0).mapv(|v| (2.0 * v).sin() + 0.1 * v * v);
    let m = fit(&x, &y, &GpFitOptions::default(), &mut rng).unwrap();
    let s2 = m.hyper().signal_variance;
    for _ in 0..10_000 {
        let q = [rng.random_range(-7.0..7.0)];
        let (_, raw) = m.predict_unclamped(ndarray::ArrayView1::from(&q[..]));
        assert!(raw >= -1e-8 * s2);
        assert!(Surrogate::predict(&m, &q).variance >= 0.0);
    }
}

#[test]
fn adding_data_never_raises_variance() {
    let mut rng = seeded_rng(8, "mono");
    for _ in 0..20 {
        let (h, x, y) = random_problem(&mut rng, 6, 1);
        let small = GpModel::condition(h.clone(), x.slice(ndarray::s![..5, ..]).to_owned(), y.slice(ndarray::s![..5]).to_owned()).unwrap();
        let big = GpModel::condition(h, x, y).unwrap();
        for _ in 0..50 {
            let q = array![rng.random_range(-4.0..4.0)];
            assert!(big.predict(q.view()).1 <= small.predict(q.view()).1 + 1e-10);
        }
    }
}

#[test]
fn dump_roundtrip() {
    let mut rng = seeded_rng(9, "dump");
    let (h, x, y) = random_problem(&mut rng, 4, 2);
    let m = GpModel::condition(h, x, y).unwrap();
    let text = serde_json::to_string(&m.dump()).unwrap();
    let back = GpModel::from_dump(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn single_precision_instantiation() {
    let x = array![[-1.0f32], [0.0], [1.0]];
    let y = array![0.0f32, 1.0, 0.0];
    let h = GpHyperparams { signal_variance: 1.0f32, lengthscales: vec![1.0], noise_variance: 1e-4, mean_constant: 0.0 };
    let m = GpModel::condition(h, x, y).unwrap();
    assert!((m.predict(array![0.0f32].view()).0 - 1.0).abs() < 1e-2);
}
