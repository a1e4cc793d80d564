//! Karhunen-Loeve basis for the random initial conditions.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FomoError, Result};

/// Largest accepted coefficient magnitude.
pub const COEFF_BOUND: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlParams {
    pub sigma_u2: f64,
    pub ell_u: f64,
}

impl Default for KlParams {
    fn default() -> Self {
        KlParams { sigma_u2: 1.0, ell_u: 0.35 }
    }
}

/// Leading eigenpairs of the complex periodic kernel on a uniform grid over `[0, 1)`.
#[derive(Debug, Clone)]
pub struct KlBasis {
    params: KlParams,
    grid: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<Complex64>,
}

fn grid_points(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}

/// `K[i, j] = s² e^{i(x_i - x_j)} e^{-d²/ℓ}` where `d` is the wrapped distance on `[0, 1)`.
pub fn kernel_matrix(grid_size: usize, params: &KlParams) -> DMatrix<Complex64> {
    let x = grid_points(grid_size);
    DMatrix::from_fn(grid_size, grid_size, |i, j| {
        let delta = x[i] - x[j];
        let wrapped = delta.abs().min(1.0 - delta.abs());
        let envelope = params.sigma_u2 * (-wrapped * wrapped / params.ell_u).exp();
        Complex64::from_polar(envelope, delta)
    })
}

fn check_hermitian(k: &DMatrix<Complex64>) -> Result<()> {
    let n = k.nrows();
    for i in 0..n {
        for j in 0..=i {
            if (k[(i, j)] - k[(j, i)].conj()).norm() > 1e-14 {
                return Err(FomoError::Invariant(format!("kernel not Hermitian at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Full spectrum of the kernel matrix, sorted by decreasing eigenvalue.
pub(crate) fn sorted_eigenpairs(k: DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let n = k.nrows();
    let eig = k.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // Fix the arbitrary phase so the largest entry is real and positive.
        let pivot = v.iter().copied().fold(Complex64::new(0.0, 0.0), |a, b| {
            if b.norm() > a.norm() + 1e-12 { b } else { a }
        });
        if pivot.norm() > 0.0 {
            v *= pivot.conj() / pivot.norm();
        }
        vectors.set_column(col, &v);
    }
    (values, vectors)
}

pub fn build_kl_basis(m: usize, grid_size: usize) -> Result<KlBasis> {
    KlBasis::new(m, grid_size, KlParams::default())
}

impl KlBasis {
    pub fn new(m: usize, grid_size: usize, params: KlParams) -> Result<Self> {
        if m == 0 || m > grid_size {
            return Err(FomoError::InvalidInput(format!(
                "mode count {m} must lie in 1..={grid_size}"
            )));
        }
        if !(params.sigma_u2 > 0.0 && params.ell_u > 0.0) {
            return Err(FomoError::InvalidInput("kernel parameters must be positive".into()));
        }
        let k = kernel_matrix(grid_size, &params);
        check_hermitian(&k)?;
        let (values, vectors) = sorted_eigenpairs(k);
        let eigenvalues = values[..m].iter().map(|v| v.max(0.0)).collect();
        let eigenvectors = vectors.columns(0, m).into_owned();
        Ok(KlBasis { params, grid: grid_points(grid_size), eigenvalues, eigenvectors })
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of real coefficients.
    pub fn dim(&self) -> usize {
        2 * self.modes()
    }

    pub fn params(&self) -> &KlParams {
        &self.params
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<Complex64> {
        &self.eigenvectors
    }

    /// `Φ Λ Φᴴ`.
    pub fn covariance(&self) -> DMatrix<Complex64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l);
        }
        &scaled * self.eigenvectors.adjoint()
    }
}

/// Synthesize `u = Σ_j (a_j + i b_j) √(Λ_j / 2) Φ_j` from interleaved `(a_j, b_j)`.
pub fn initial_condition(basis: &KlBasis, coeffs: &[f64]) -> Result<Vec<Complex64>> {
    if coeffs.len() != basis.dim() {
        return Err(FomoError::InvalidInput(format!(
            "expected {} coefficients, got {}",
            basis.dim(),
            coeffs.len()
        )));
    }
    if let Some(c) = coeffs.iter().find(|c| !(c.abs() <= COEFF_BOUND)) {
        return Err(FomoError::Domain(format!("coefficient {c} outside [-6, 6]")));
    }
    let n = basis.grid.len();
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    for (j, pair) in coeffs.chunks_exact(2).enumerate() {
        let c = Complex64::new(pair[0], pair[1]) * (basis.eigenvalues[j] / 2.0).sqrt();
        if c == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (ui, phi) in u.iter_mut().zip(basis.eigenvectors.column(j).iter()) {
            *ui += c * phi;
        }
    }
    Ok(u)
}
