//! Gaussian process regression with an RBF-ARD kernel and a constant mean.
//!
//! The kernel is `s2 * exp(-sum_j (x_j - x'_j)^2 / (2 l_j^2))`. Training
//! noise defaults to zero; the Gram matrix is factored with an adaptive
//! jitter proportional to `s2` that only exists to make the Cholesky
//! factorization succeed.

mod linalg;
mod optimize;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use linalg::{cho_inverse, cho_solve, cholesky, log_det};
pub use optimize::{fit, GpFactory, GpFitOptions};

use crate::error::{FomoError, Result};
use crate::scalar::Real;
use crate::surrogate::{Prediction, Surrogate};

/// First jitter level, relative to the signal variance.
pub const JITTER_START: f64 = 1e-10;
/// Last jitter level before giving up.
pub const JITTER_MAX: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams<T> {
    pub signal_variance: T,
    pub lengthscales: Vec<T>,
    pub noise_variance: T,
    pub mean_constant: T,
}

impl<T: Real> GpHyperparams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > T::zero()) {
            return Err(FomoError::InvalidInput("signal variance must be positive".into()));
        }
        if self.lengthscales.is_empty() || self.lengthscales.iter().any(|l| !(*l > T::zero())) {
            return Err(FomoError::InvalidInput("lengthscales must be positive".into()));
        }
        if self.noise_variance < T::zero() {
            return Err(FomoError::InvalidInput("noise variance must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// RBF-ARD covariance between two inputs.
pub fn kernel<T: Real>(x: ArrayView1<T>, x2: ArrayView1<T>, hyper: &GpHyperparams<T>) -> T {
    let mut r2 = T::zero();
    for ((a, b), l) in x.iter().zip(x2.iter()).zip(&hyper.lengthscales) {
        let z = (*a - *b) / *l;
        r2 = r2 + z * z;
    }
    hyper.signal_variance * (-r2 / T::lit(2.0)).exp()
}

/// Noise-free Gram matrix `k(X, X)`.
pub fn gram<T: Real>(x: &Array2<T>, hyper: &GpHyperparams<T>) -> Array2<T> {
    let n = x.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = hyper.signal_variance;
        for j in 0..i {
            let v = kernel(x.row(i), x.row(j), hyper);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Factor `k(X,X) + (noise + jitter) I`, escalating the jitter from
/// `JITTER_START * s2` by factors of ten up to `JITTER_MAX * s2`.
/// Returns the factor and the absolute jitter used.
pub(crate) fn factor_with_jitter<T: Real>(
    k: &Array2<T>,
    hyper: &GpHyperparams<T>,
) -> Result<(Array2<T>, T)> {
    let n = k.nrows();
    let mut rel = JITTER_START;
    loop {
        let jitter = T::lit(rel) * hyper.signal_variance;
        let mut a = k.clone();
        for i in 0..n {
            a[[i, i]] = a[[i, i]] + hyper.noise_variance + jitter;
        }
        if let Some(l) = cholesky(&a) {
            return Ok((l, jitter));
        }
        if rel >= JITTER_MAX * (1.0 - 1e-9) {
            return Err(FomoError::IllConditioned { jitter: jitter.as_f64() });
        }
        rel *= 10.0;
    }
}

fn check_training_set<T: Real>(x: &Array2<T>, y: &Array1<T>, hyper: &GpHyperparams<T>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(FomoError::InvalidInput(format!("{} inputs but {} outputs", x.nrows(), y.len())));
    }
    if x.nrows() == 0 {
        return Err(FomoError::InvalidInput("empty training set".into()));
    }
    if x.ncols() != hyper.dim() {
        return Err(FomoError::InvalidInput(format!(
            "inputs have {} columns but {} lengthscales",
            x.ncols(),
            hyper.dim()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(FomoError::InvalidInput("training data must be finite".into()));
    }
    Ok(())
}

/// Rows closer than `1e-10` make a noiseless Gram matrix singular.
pub(crate) fn has_near_duplicates<T: Real>(x: &Array2<T>) -> bool {
    let tol = T::lit(1e-10);
    for i in 0..x.nrows() {
        for j in 0..i {
            let d2: T = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
            if d2.sqrt() < tol {
                return true;
            }
        }
    }
    false
}

/// A conditioned Gaussian process. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel<T> {
    hyper: GpHyperparams<T>,
    train_inputs: Array2<T>,
    train_outputs: Array1<T>,
    chol_factor: Array2<T>,
    alpha: Array1<T>,
    jitter: T,
}

impl<T: Real> GpModel<T> {
    /// Condition a GP with fixed hyperparameters on `(x, y)`.
    pub fn condition(hyper: GpHyperparams<T>, x: Array2<T>, y: Array1<T>) -> Result<Self> {
        hyper.validate()?;
        check_training_set(&x, &y, &hyper)?;
        if hyper.noise_variance == T::zero() && has_near_duplicates(&x) {
            return Err(FomoError::IllConditioned { jitter: (T::lit(JITTER_MAX) * hyper.signal_variance).as_f64() });
        }
        let k = gram(&x, &hyper);
        let (chol_factor, jitter) = factor_with_jitter(&k, &hyper)?;
        let resid = y.mapv(|v| v - hyper.mean_constant);
        let alpha = cho_solve(&chol_factor, resid.view());
        Ok(GpModel { hyper, train_inputs: x, train_outputs: y, chol_factor, alpha, jitter })
    }

    pub fn hyper(&self) -> &GpHyperparams<T> {
        &self.hyper
    }

    pub fn train_inputs(&self) -> &Array2<T> {
        &self.train_inputs
    }

    pub fn train_outputs(&self) -> &Array1<T> {
        &self.train_outputs
    }

    pub fn chol_factor(&self) -> &Array2<T> {
        &self.chol_factor
    }

    pub fn alpha(&self) -> &Array1<T> {
        &self.alpha
    }

    /// Absolute jitter added to the diagonal during factorization.
    pub fn jitter(&self) -> T {
        self.jitter
    }

    /// The factored matrix `k(X,X) + (noise + jitter) I`.
    pub fn covariance(&self) -> Array2<T> {
        let mut k = gram(&self.train_inputs, &self.hyper);
        for i in 0..k.nrows() {
            k[[i, i]] = k[[i, i]] + self.hyper.noise_variance + self.jitter;
        }
        k
    }

    fn cross(&self, x: ArrayView1<T>) -> Array1<T> {
        self.train_inputs.rows().into_iter().map(|r| kernel(x, r, &self.hyper)).collect()
    }

    /// Posterior mean and variance before clamping the variance at zero.
    pub fn predict_unclamped(&self, x: ArrayView1<T>) -> (T, T) {
        let ks = self.cross(x);
        let mean = self.hyper.mean_constant + ks.dot(&self.alpha);
        let v = linalg::solve_lower(&self.chol_factor, ks.view());
        let var = self.hyper.signal_variance - v.dot(&v);
        (mean, var)
    }

    pub fn predict_mean(&self, x: ArrayView1<T>) -> T {
        self.hyper.mean_constant + self.cross(x).dot(&self.alpha)
    }

    /// Posterior mean and (clamped) variance at `x`.
    pub fn predict(&self, x: ArrayView1<T>) -> (T, T) {
        let (m, v) = self.predict_unclamped(x);
        (m, v.max(T::zero()))
    }

    /// Log marginal likelihood and its gradient with respect to
    /// `[ln s2, ln l_1, ..., ln l_d]` at the model's hyperparameters.
    pub fn log_marginal_likelihood(&self) -> Result<(T, Vec<T>)> {
        log_evidence(&self.hyper, &self.train_inputs, &self.train_outputs)
    }
}

struct EvidenceParts<T> {
    value: T,
    kf: Array2<T>,
    l: Array2<T>,
    alpha: Array1<T>,
    jitter: T,
}

fn evidence_parts<T: Real>(hyper: &GpHyperparams<T>, x: &Array2<T>, y: &Array1<T>) -> Result<EvidenceParts<T>> {
    hyper.validate()?;
    check_training_set(x, y, hyper)?;
    let n = x.nrows();
    let kf = gram(x, hyper);
    let (l, jitter) = factor_with_jitter(&kf, hyper)?;
    let resid = y.mapv(|v| v - hyper.mean_constant);
    let alpha = cho_solve(&l, resid.view());
    let two = T::lit(2.0);
    let value = -resid.dot(&alpha) / two
        - log_det(&l) / two
        - T::from_len(n) * (two * T::PI()).ln() / two;
    Ok(EvidenceParts { value, kf, l, alpha, jitter })
}

/// Log marginal likelihood without the gradient.
pub fn log_evidence_value<T: Real>(hyper: &GpHyperparams<T>, x: &Array2<T>, y: &Array1<T>) -> Result<T> {
    Ok(evidence_parts(hyper, x, y)?.value)
}

/// Log marginal likelihood
/// `-(1/2) r^T K^-1 r - (1/2) ln|K| - (n/2) ln 2 pi` with `r = y - m0`,
/// together with its exact gradient in log-hyperparameter space.
pub fn log_evidence<T: Real>(
    hyper: &GpHyperparams<T>,
    x: &Array2<T>,
    y: &Array1<T>,
) -> Result<(T, Vec<T>)> {
    let EvidenceParts { value, kf, l, alpha, jitter } = evidence_parts(hyper, x, y)?;
    let n = x.nrows();
    let d = x.ncols();
    let two = T::lit(2.0);

    // dL/dtheta = 1/2 tr((alpha alpha^T - K^-1) dK/dtheta)
    let kinv = cho_inverse(&l);
    let mut grad = vec![T::zero(); d + 1];
    let jitter_rel = jitter / hyper.signal_variance;
    for i in 0..n {
        for j in 0..n {
            let m = alpha[i] * alpha[j] - kinv[[i, j]];
            let kij = if i == j { kf[[i, j]] * (T::one() + jitter_rel) } else { kf[[i, j]] };
            grad[0] = grad[0] + m * kij;
            if i != j {
                for (c, l) in hyper.lengthscales.iter().enumerate() {
                    let z = (x[[i, c]] - x[[j, c]]) / *l;
                    grad[c + 1] = grad[c + 1] + m * kf[[i, j]] * z * z;
                }
            }
        }
    }
    for g in grad.iter_mut() {
        *g = *g / two;
    }
    Ok((value, grad))
}

impl Surrogate for GpModel<f64> {
    fn input_dim(&self) -> usize {
        self.hyper.dim()
    }

    fn predict(&self, x: &[f64]) -> Prediction {
        let (mean, variance) = GpModel::predict(self, ArrayView1::from(x));
        Prediction { mean, variance }
    }

    fn predict_mean_many(&self, x: &Array2<f64>) -> Array1<f64> {
        let rows: Vec<_> = x.rows().into_iter().collect();
        rows.par_iter().map(|r| self.predict_mean(*r)).collect::<Vec<f64>>().into()
    }
}

/// Plain-text provenance dump of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpDump {
    pub hyper: GpHyperparams<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl GpModel<f64> {
    pub fn dump(&self) -> GpDump {
        GpDump {
            hyper: self.hyper.clone(),
            inputs: self.train_inputs.axis_iter(Axis(0)).map(|r| r.to_vec()).collect(),
            outputs: self.train_outputs.to_vec(),
        }
    }

    pub fn from_dump(dump: &GpDump) -> Result<Self> {
        let n = dump.inputs.len();
        let d = dump.inputs.first().map_or(0, Vec::len);
        let flat: Vec<f64> = dump.inputs.iter().flatten().copied().collect();
        let x = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| FomoError::InvalidInput(format!("ragged model dump: {e}")))?;
        Self::condition(dump.hyper.clone(), x, Array1::from(dump.outputs.clone()))
    }
}

#[cfg(test)]
mod tests;
