//! Pseudospectral solver for the MMT dispersive wave equation.
//!
//! Solves `i u_t = |∂x|^α u + λ P(|Pu|² Pu) - i D u` with `P = |∂x|^(-β/4)` on a periodic
//! grid, using fourth-order exponential time differencing (ETDRK4) for the stiff linear part.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::kl::{initial_condition, KlBasis};
use super::Problem;
use crate::error::{FomoError, Result};

/// Norm growth factor that flags an unstable step size.
pub const GROWTH_LIMIT: f64 = 1e6;

/// Contour points for the ETDRK4 coefficient integrals.
const CONTOUR_POINTS: usize = 64;

/// Damping rate `D(k) = rate (|k|/k_max)^power` for `|k| > onset k_max`, zero below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dissipation {
    pub rate: f64,
    pub onset: f64,
    pub power: i32,
}

impl Default for Dissipation {
    fn default() -> Self {
        Dissipation { rate: 100.0, onset: 2.0 / 3.0, power: 8 }
    }
}

impl Dissipation {
    pub fn none() -> Self {
        Dissipation { rate: 0.0, ..Dissipation::default() }
    }

    pub fn at(&self, k_abs: f64, k_max: f64) -> f64 {
        if self.rate == 0.0 || k_abs <= self.onset * k_max {
            0.0
        } else {
            self.rate * (k_abs / k_max).powi(self.power)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmtConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    #[serde(default)]
    pub dissipation: Dissipation,
    pub grid_size: usize,
    pub domain_length: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl Default for MmtConfig {
    fn default() -> Self {
        MmtConfig {
            alpha: 0.5,
            beta: 0.0,
            lambda: -4.0,
            dissipation: Dissipation::default(),
            grid_size: 512,
            domain_length: 2.0 * PI,
            dt: 1e-3,
            horizon: 20.0,
        }
    }
}

impl MmtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 64 || !self.grid_size.is_power_of_two() {
            return Err(FomoError::Config(format!(
                "grid_size must be a power of two >= 64, got {}",
                self.grid_size
            )));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.dt) || !positive(self.domain_length) || !(self.horizon >= 0.0) {
            return Err(FomoError::Config("dt, domain_length must be positive and T >= 0".into()));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite() && self.lambda.is_finite()) {
            return Err(FomoError::Config("alpha, beta, lambda must be finite".into()));
        }
        let d = &self.dissipation;
        if !(d.rate >= 0.0 && d.rate.is_finite() && (0.0..=1.0).contains(&d.onset)) {
            return Err(FomoError::Config("dissipation needs rate >= 0 and onset in [0, 1]".into()));
        }
        Ok(())
    }

    /// Wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.grid_size as i64;
        let base = 2.0 * PI / self.domain_length;
        (0..n).map(|j| base * (if j < n / 2 { j } else { j - n }) as f64).collect()
    }

    /// Step count and the step that lands exactly on `T`.
    pub fn steps(&self) -> (usize, f64) {
        let n = (self.horizon / self.dt).ceil().max(0.0) as usize;
        if n == 0 {
            (0, 0.0)
        } else {
            (n, self.horizon / n as f64)
        }
    }
}

/// Mean of `g(hL + r)` over a circle of radius one around `hL`.
fn contour_mean(z: Complex64, g: impl Fn(Complex64) -> Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..CONTOUR_POINTS {
        let theta = PI * (2.0 * j as f64 + 1.0) / CONTOUR_POINTS as f64;
        acc += g(z + Complex64::from_polar(1.0, theta));
    }
    acc / CONTOUR_POINTS as f64
}

/// Precomputed operators for one configuration. Cheap to share across threads.
pub struct MmtSolver {
    config: MmtConfig,
    n_steps: usize,
    step: f64,
    linear: Vec<Complex64>,
    projector: Vec<f64>,
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

struct Workspace {
    field: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl MmtSolver {
    pub fn new(config: MmtConfig) -> Result<Self> {
        config.validate()?;
        let n = config.grid_size;
        let ks = config.wavenumbers();
        let k_max = ks.iter().fold(0.0f64, |m, k| m.max(k.abs()));
        let linear: Vec<Complex64> = ks
            .iter()
            .map(|k| {
                let ka = k.abs();
                Complex64::new(-config.dissipation.at(ka, k_max), -ka.powf(config.alpha))
            })
            .collect();
        let projector = ks
            .iter()
            .map(|k| {
                let ka = k.abs();
                if ka == 0.0 {
                    if config.beta == 0.0 { 1.0 } else { 0.0 }
                } else {
                    ka.powf(-config.beta / 4.0)
                }
            })
            .collect();

        let (n_steps, h) = config.steps();
        let one = Complex64::new(1.0, 0.0);
        let mut e = Vec::with_capacity(n);
        let mut e2 = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        let mut f1 = Vec::with_capacity(n);
        let mut f2 = Vec::with_capacity(n);
        let mut f3 = Vec::with_capacity(n);
        for l in &linear {
            let z = l * h;
            e.push(z.exp());
            e2.push((z / 2.0).exp());
            q.push(contour_mean(z, |w| ((w / 2.0).exp() - one) / w) * h);
            f1.push(
                contour_mean(z, |w| (-4.0 - w + w.exp() * (4.0 - 3.0 * w + w * w)) / (w * w * w)) * h,
            );
            f2.push(contour_mean(z, |w| (2.0 + w + w.exp() * (w - 2.0)) / (w * w * w)) * h);
            f3.push(contour_mean(z, |w| (-4.0 - 3.0 * w - w * w + w.exp() * (4.0 - w)) / (w * w * w)) * h);
        }

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(MmtSolver { config, n_steps, step: h, linear, projector, e, e2, q, f1, f2, f3, forward, inverse })
    }

    pub fn config(&self) -> &MmtConfig {
        &self.config
    }

    /// Diagonal linear operator `-i|k|^α - D(k)`.
    pub fn linear_operator(&self) -> &[Complex64] {
        &self.linear
    }

    fn workspace(&self) -> Workspace {
        let n = self.config.grid_size;
        let len = self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len());
        Workspace { field: vec![Complex64::new(0.0, 0.0); n], scratch: vec![Complex64::new(0.0, 0.0); len] }
    }

    /// Unnormalized forward transform.
    pub fn to_spectral(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut v = u.to_vec();
        self.forward.process(&mut v);
        v
    }

    pub fn to_physical(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut u = v.to_vec();
        self.inverse.process(&mut u);
        let scale = 1.0 / u.len() as f64;
        u.iter_mut().for_each(|z| *z *= scale);
        u
    }

    fn nonlinear(&self, v: &[Complex64], out: &mut [Complex64], ws: &mut Workspace) {
        if self.config.lambda == 0.0 {
            out.fill(Complex64::new(0.0, 0.0));
            return;
        }
        let n = v.len() as f64;
        for ((f, vk), p) in ws.field.iter_mut().zip(v).zip(&self.projector) {
            *f = vk * (p / n);
        }
        self.inverse.process_with_scratch(&mut ws.field, &mut ws.scratch);
        for z in ws.field.iter_mut() {
            *z *= z.norm_sqr();
        }
        self.forward.process_with_scratch(&mut ws.field, &mut ws.scratch);
        let coef = Complex64::new(0.0, -self.config.lambda);
        for ((o, f), p) in out.iter_mut().zip(&ws.field).zip(&self.projector) {
            *o = coef * f * *p;
        }
    }

    /// Evolve spectral coefficients to `T`, calling `observe(step, v)` after every step.
    pub fn evolve_spectral_observed(
        &self,
        v0: &[Complex64],
        mut observe: impl FnMut(usize, &[Complex64]),
    ) -> Result<Vec<Complex64>> {
        let n = self.config.grid_size;
        if v0.len() != n {
            return Err(FomoError::InvalidInput(format!(
                "field has {} points, grid has {n}",
                v0.len()
            )));
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut ws = self.workspace();
        let mut v = v0.to_vec();
        let (mut nv, mut na, mut nb, mut nc) = (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
        let (mut a, mut b, mut c) = (vec![zero; n], vec![zero; n], vec![zero; n]);
        let norm0 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

        for step in 0..self.n_steps {
            self.nonlinear(&v, &mut nv, &mut ws);
            for k in 0..n {
                a[k] = self.e2[k] * v[k] + self.q[k] * nv[k];
            }
            self.nonlinear(&a, &mut na, &mut ws);
            for k in 0..n {
                b[k] = self.e2[k] * v[k] + self.q[k] * na[k];
            }
            self.nonlinear(&b, &mut nb, &mut ws);
            for k in 0..n {
                c[k] = self.e2[k] * a[k] + self.q[k] * (2.0 * nb[k] - nv[k]);
            }
            self.nonlinear(&c, &mut nc, &mut ws);
            let mut norm = 0.0;
            for k in 0..n {
                v[k] = self.e[k] * v[k]
                    + self.f1[k] * nv[k]
                    + 2.0 * self.f2[k] * (na[k] + nb[k])
                    + self.f3[k] * nc[k];
                norm += v[k].norm_sqr();
            }
            let time = (step + 1) as f64 * self.step;
            if !norm.is_finite() {
                return Err(FomoError::BlowUp { time });
            }
            let norm = norm.sqrt();
            if norm0 > 0.0 && norm > GROWTH_LIMIT * norm0 {
                return Err(FomoError::Unstable { time, growth: norm / norm0 });
            }
            observe(step + 1, &v);
        }
        Ok(v)
    }

    /// Evolve a physical field from `t = 0` to `T`.
    pub fn evolve(&self, u0: &[Complex64]) -> Result<Vec<Complex64>> {
        let v0 = self.to_spectral(u0);
        let v = self.evolve_spectral_observed(&v0, |_, _| {})?;
        Ok(self.to_physical(&v))
    }

    /// Physical fields at `t = 0` and after every `every` steps.
    pub fn evolve_snapshots(&self, u0: &[Complex64], every: usize) -> Result<Vec<(f64, Vec<Complex64>)>> {
        let every = every.max(1);
        let mut frames = vec![(0.0, u0.to_vec())];
        let v0 = self.to_spectral(u0);
        self.evolve_spectral_observed(&v0, |step, v| {
            if step % every == 0 || step == self.n_steps {
                frames.push((step as f64 * self.step, self.to_physical(v)));
            }
        })?;
        Ok(frames)
    }
}

pub fn mmt_evolve(config: &MmtConfig, u0: &[Complex64]) -> Result<Vec<Complex64>> {
    MmtSolver::new(config.clone())?.evolve(u0)
}

fn max_real(u: &[Complex64]) -> f64 {
    u.iter().fold(0.0, |m, z| m.max(z.re.abs()))
}

/// `max_x |Re u(x, T)|` for the field synthesized from `coeffs`.
pub fn wave_height_map(config: &MmtConfig, basis: &KlBasis, coeffs: &[f64]) -> Result<f64> {
    MmtProblem::new(config.clone(), basis.clone())?.evaluate(coeffs)
}

/// The wave-height map with its solver and basis prepared once.
pub struct MmtProblem {
    solver: MmtSolver,
    basis: KlBasis,
}

impl MmtProblem {
    pub fn new(config: MmtConfig, basis: KlBasis) -> Result<Self> {
        if basis.grid().len() != config.grid_size {
            return Err(FomoError::Config(format!(
                "basis has {} grid points, solver has {}",
                basis.grid().len(),
                config.grid_size
            )));
        }
        Ok(MmtProblem { solver: MmtSolver::new(config)?, basis })
    }

    pub fn solver(&self) -> &MmtSolver {
        &self.solver
    }

    pub fn basis(&self) -> &KlBasis {
        &self.basis
    }

    pub fn final_field(&self, coeffs: &[f64]) -> Result<Vec<Complex64>> {
        let u0 = initial_condition(&self.basis, coeffs)?;
        self.solver.evolve(&u0)
    }
}

impl Problem for MmtProblem {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(max_real(&self.final_field(x)?))
    }
}

#[cfg(test)]
mod tests;
