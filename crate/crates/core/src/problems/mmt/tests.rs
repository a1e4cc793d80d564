use super::*;
use crate::problems::build_kl_basis;
use crate::rng::seeded_rng;
use rand::Rng;

fn linear_config(grid_size: usize) -> MmtConfig {
    MmtConfig { lambda: 0.0, dissipation: Dissipation::none(), grid_size, ..MmtConfig::default() }
}

fn random_field(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = seeded_rng(seed, "mmt-field");
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn l2(u: &[Complex64]) -> f64 {
    u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Naive DFT-based exact linear evolution.
fn exact_linear(u0: &[Complex64], alpha: f64, t: f64) -> Vec<Complex64> {
    let n = u0.len();
    let ks: Vec<f64> = (0..n as i64).map(|j| if j < n as i64 / 2 { j } else { j - n as i64 } as f64).collect();
    let x: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
    let spectrum: Vec<Complex64> = ks
        .iter()
        .map(|&k| {
            let c: Complex64 = u0.iter().zip(&x).map(|(u, xi)| u * Complex64::from_polar(1.0, -k * xi)).sum();
            c * Complex64::from_polar(1.0, -k.abs().powf(alpha) * t) / n as f64
        })
        .collect();
    x.iter()
        .map(|xi| spectrum.iter().zip(&ks).map(|(c, k)| c * Complex64::from_polar(1.0, k * xi)).sum())
        .collect()
}

#[test]
fn linear_phase_evolution_is_exact() {
    let config = linear_config(64);
    let solver = MmtSolver::new(config.clone()).unwrap();
    let u0 = random_field(64, 1);
    let v0 = solver.to_spectral(&u0);
    let v = solver.evolve_spectral_observed(&v0, |_, _| {}).unwrap();
    for ((vk, v0k), k) in v.iter().zip(&v0).zip(config.wavenumbers()) {
        let expected = v0k * Complex64::from_polar(1.0, -k.abs().powf(config.alpha) * config.horizon);
        assert!((vk - expected).norm() <= 1e-10 * v0k.norm(), "k = {k}");
        assert!((vk.norm() - v0k.norm()).abs() <= 1e-10 * v0k.norm());
    }
    let u = solver.to_physical(&v);
    assert!((l2(&u) - l2(&u0)).abs() <= 1e-10 * l2(&u0));
    assert!(diff(&u, &exact_linear(&u0, config.alpha, config.horizon)) <= 1e-10 * l2(&u0));
}

#[test]
fn single_mode_linear_map_matches_closed_form() {
    let config = linear_config(64);
    let basis = build_kl_basis(4, 64).unwrap();
    let mut c = [0.0; 8];
    c[0] = 1.0;
    let u0 = initial_condition(&basis, &c).unwrap();
    let expected = max_real(&exact_linear(&u0, config.alpha, config.horizon));
    let got = wave_height_map(&config, &basis, &c).unwrap();
    assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
}

#[test]
fn zero_field_stays_zero() {
    let config = MmtConfig { grid_size: 64, dt: 1e-2, ..MmtConfig::default() };
    let basis = build_kl_basis(4, 64).unwrap();
    assert_eq!(wave_height_map(&config, &basis, &[0.0; 8]).unwrap(), 0.0);
}

#[test]
fn evolution_is_deterministic() {
    let config = MmtConfig { grid_size: 64, dt: 1e-2, horizon: 2.0, ..MmtConfig::default() };
    let u0 = random_field(64, 2);
    let a = mmt_evolve(&config, &u0).unwrap();
    let b = mmt_evolve(&config, &u0).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
}

fn convergence_setup() -> (MmtConfig, Vec<Complex64>) {
    let config = MmtConfig {
        dissipation: Dissipation::none(),
        grid_size: 64,
        horizon: 1.0,
        ..MmtConfig::default()
    };
    let basis = build_kl_basis(4, 64).unwrap();
    let u0 = initial_condition(&basis, &[1.5, -0.5, 1.0, 0.8, -1.2, 0.3, 0.7, -0.9]).unwrap();
    (config, u0)
}

#[test]
fn nonlinear_self_convergence_is_fourth_order() {
    let (config, u0) = convergence_setup();
    let run = |dt: f64| mmt_evolve(&MmtConfig { dt, ..config.clone() }, &u0).unwrap();
    let (dt1, dt2) = (0.00625, 0.003125);
    let reference = run(dt2 / 8.0);
    let e1 = diff(&run(dt1), &reference);
    let e2 = diff(&run(dt2), &reference);
    let order = (e1 / e2).log2();
    assert!((order - 4.0).abs() <= 0.5, "observed order {order} (errors {e1:e}, {e2:e})");
}

#[test]
fn global_phase_is_equivariant_but_map_is_not_invariant() {
    let (config, u0) = convergence_setup();
    let config = MmtConfig { dt: 0.01, horizon: 2.0, ..config };
    let rot = Complex64::from_polar(1.0, 0.9);
    let u0r: Vec<Complex64> = u0.iter().map(|z| z * rot).collect();
    let a = mmt_evolve(&config, &u0).unwrap();
    let b = mmt_evolve(&config, &u0r).unwrap();
    let a_rot: Vec<Complex64> = a.iter().map(|z| z * rot).collect();
    assert!(diff(&a_rot, &b) < 1e-9 * l2(&a));
    assert!((max_real(&a) - max_real(&b)).abs() > 1e-6);
}

#[test]
fn dissipation_damps_top_modes_only() {
    let config = MmtConfig { lambda: 0.0, grid_size: 64, horizon: 0.1, ..MmtConfig::default() };
    let solver = MmtSolver::new(config.clone()).unwrap();
    let ks = config.wavenumbers();
    for (l, k) in solver.linear_operator().iter().zip(&ks) {
        if k.abs() <= 2.0 / 3.0 * 32.0 {
            assert_eq!(l.re, 0.0);
        } else {
            assert!(l.re < 0.0);
        }
    }
    let top = ks.iter().position(|k| k.abs() == 32.0).unwrap();
    assert!((solver.linear_operator()[top].re + 100.0).abs() < 1e-12);
}

#[test]
fn runaway_growth_is_reported() {
    let config = MmtConfig {
        lambda: -1e4,
        dissipation: Dissipation::none(),
        grid_size: 64,
        dt: 0.5,
        horizon: 50.0,
        ..MmtConfig::default()
    };
    let u0 = random_field(64, 5);
    match mmt_evolve(&config, &u0) {
        Err(FomoError::BlowUp { time }) | Err(FomoError::Unstable { time, .. }) => assert!(time > 0.0),
        other => panic!("expected a numerical failure, got {other:?}"),
    }
}

#[test]
fn config_validation() {
    assert!(MmtConfig { grid_size: 32, ..MmtConfig::default() }.validate().is_err());
    assert!(MmtConfig { grid_size: 100, ..MmtConfig::default() }.validate().is_err());
    assert!(MmtConfig { dt: 0.0, ..MmtConfig::default() }.validate().is_err());
    assert!(MmtConfig::default().validate().is_ok());
    let basis = build_kl_basis(4, 64).unwrap();
    assert!(MmtProblem::new(MmtConfig::default(), basis).is_err());
}

#[test]
fn config_toml_roundtrip() {
    let c = MmtConfig::default();
    let text = toml::to_string(&c).unwrap();
    assert!(text.contains("T = 20"));
    let back: MmtConfig = toml::from_str(&text).unwrap();
    assert_eq!(back, c);
}
