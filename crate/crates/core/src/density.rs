//! Weighted one-dimensional Gaussian kernel density estimation.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PdfDesign;
use crate::distribution::InputDistribution;
use crate::error::{FomoError, Result};
use crate::samplers::{latin_hypercube, latin_hypercube_in_distribution, DesignSpec, Scheme};
use crate::scalar::Real;
use crate::surrogate::Surrogate;

/// Points on the plotting / integration grid.
pub const GRID_POINTS: usize = 1024;

/// Above this many centers evaluation switches to linear binning.
pub const EXACT_CENTER_LIMIT: usize = 20_000;

/// Kernel terms beyond this many bandwidths underflow in `f64` and are skipped.
const EXACT_CUTOFF: f64 = 40.0;
const BINNED_CUTOFF: f64 = 12.0;
const BINS_PER_BANDWIDTH: f64 = 1000.0;
/// The binned kernel recurrence restarts from an exact exponential this often.
const RESYNC_EVERY: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Binned<T> {
    origin: T,
    spacing: T,
    mass: Vec<T>,
}

/// A fitted weighted KDE. Immutable after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate<T> {
    centers: Vec<T>,
    weights: Vec<T>,
    bandwidth: T,
    eval_grid: Vec<T>,
    grid_density: Vec<T>,
    binned: Option<Binned<T>>,
}

fn validate<T: Real>(data: &[T], weights: &[T]) -> Result<T> {
    if data.len() != weights.len() {
        return Err(FomoError::InvalidInput(format!(
            "{} data points but {} weights",
            data.len(),
            weights.len()
        )));
    }
    if data.len() < 2 {
        return Err(FomoError::InsufficientData(data.len()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(FomoError::InvalidInput("KDE data must be finite".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
        return Err(FomoError::InvalidInput("KDE weights must be finite and nonnegative".into()));
    }
    let total: T = weights.iter().copied().sum();
    if total <= T::zero() {
        return Err(FomoError::DegenerateWeights);
    }
    Ok(total)
}

/// Scott's rule with the weighted effective sample size,
/// `h = sigma_w * n_eff^(-1/5)` where `n_eff = (sum w)^2 / sum w^2`.
pub fn scott_bandwidth<T: Real>(data: &[T], weights: &[T]) -> Result<T> {
    let total = validate(data, weights)?;
    let norm: Vec<T> = weights.iter().map(|&w| w / total).collect();
    let mean: T = data.iter().zip(&norm).map(|(&x, &w)| w * x).sum();
    let var: T = data.iter().zip(&norm).map(|(&x, &w)| w * (x - mean) * (x - mean)).sum();
    let sum_sq: T = norm.iter().map(|&w| w * w).sum();
    let n_eff = T::one() / sum_sq;
    let h = var.sqrt() * n_eff.powf(T::lit(-0.2));
    if h.is_finite() && h > T::zero() {
        Ok(h)
    } else {
        // Degenerate spread (e.g. a constant surrogate): fall back to a narrow kernel.
        Ok(T::lit(1e-3) * mean.abs().max(T::one()))
    }
}

/// Fit with Scott's bandwidth.
pub fn fit_kde<T: Real>(data: &[T], weights: &[T]) -> Result<DensityEstimate<T>> {
    let h = scott_bandwidth(data, weights)?;
    fit_kde_with_bandwidth(data, weights, h)
}

/// Fit with an explicit bandwidth.
pub fn fit_kde_with_bandwidth<T: Real>(data: &[T], weights: &[T], bandwidth: T) -> Result<DensityEstimate<T>> {
    let total = validate(data, weights)?;
    if !(bandwidth > T::zero() && bandwidth.is_finite()) {
        return Err(FomoError::InvalidInput("bandwidth must be positive".into()));
    }
    let mut pairs: Vec<(T, T)> = data.iter().zip(weights).map(|(&x, &w)| (x, w / total)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite data"));
    let (centers, weights): (Vec<T>, Vec<T>) = pairs.into_iter().unzip();

    let binned = (centers.len() > EXACT_CENTER_LIMIT).then(|| bin_linear(&centers, &weights, bandwidth));
    let mut est = DensityEstimate {
        centers,
        weights,
        bandwidth,
        eval_grid: Vec::new(),
        grid_density: Vec::new(),
        binned,
    };
    let three_h = T::lit(3.0) * bandwidth;
    let lo = est.centers[0] - three_h;
    let hi = est.centers[est.centers.len() - 1] + three_h;
    est.eval_grid = linspace(lo, hi, GRID_POINTS);
    est.grid_density = est.evaluate_many(&est.eval_grid);
    Ok(est)
}

fn bin_linear<T: Real>(centers: &[T], weights: &[T], h: T) -> Binned<T> {
    let spacing = h / T::lit(BINS_PER_BANDWIDTH);
    let origin = centers[0];
    let span = centers[centers.len() - 1] - origin;
    let bins = (span / spacing).ceil().to_usize().unwrap_or(0) + 2;
    let mut mass = vec![T::zero(); bins];
    for (&c, &w) in centers.iter().zip(weights) {
        let pos = (c - origin) / spacing;
        let i = pos.floor().to_usize().unwrap_or(0).min(bins - 2);
        let t = pos - T::from_len(i);
        mass[i] = mass[i] + w * (T::one() - t);
        mass[i + 1] = mass[i + 1] + w * t;
    }
    Binned { origin, spacing, mass }
}

pub(crate) fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    let step = (hi - lo) / T::from_len(n - 1);
    (0..n).map(|i| if i + 1 == n { hi } else { lo + step * T::from_len(i) }).collect()
}

#[inline]
fn gauss<T: Real>(z: T) -> T {
    (-(z * z) / T::lit(2.0)).exp()
}

impl<T: Real> DensityEstimate<T> {
    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    /// Normalized weights, aligned with [`Self::centers`].
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn eval_grid(&self) -> &[T] {
        &self.eval_grid
    }

    pub fn grid_density(&self) -> &[T] {
        &self.grid_density
    }

    pub fn support(&self) -> (T, T) {
        (self.eval_grid[0], self.eval_grid[self.eval_grid.len() - 1])
    }

    pub fn max_grid_density(&self) -> T {
        self.grid_density.iter().copied().fold(T::zero(), T::max)
    }

    /// Kernel sum at `y`.
    pub fn evaluate(&self, y: T) -> T {
        let h = self.bandwidth;
        let norm = T::one() / (h * (T::lit(2.0) * T::PI()).sqrt());
        if let Some(b) = &self.binned {
            let reach = T::lit(BINNED_CUTOFF) * h;
            let first = ((y - reach - b.origin) / b.spacing).ceil().max(T::zero());
            let last = ((y + reach - b.origin) / b.spacing).floor();
            if last < T::zero() {
                return T::zero();
            }
            let i0 = first.to_usize().unwrap_or(0);
            let i1 = last.to_usize().unwrap_or(0).min(b.mass.len() - 1);
            // On the lattice z_i = z_0 - i s: e_{i+1} = e_i r_i, r_{i+1} = r_i exp(-s^2).
            let s = b.spacing / h;
            let step = (-(s * s)).exp();
            let mut acc = T::zero();
            let (mut e, mut r) = (T::zero(), T::zero());
            for i in i0..=i1 {
                if (i - i0) % RESYNC_EVERY == 0 {
                    let z = (y - b.origin - b.spacing * T::from_len(i)) / h;
                    e = gauss(z);
                    r = (z * s - s * s / T::lit(2.0)).exp();
                }
                acc = acc + b.mass[i] * e;
                e = e * r;
                r = r * step;
            }
            return acc * norm;
        }
        let reach = T::lit(EXACT_CUTOFF) * h;
        let start = self.centers.partition_point(|&c| c < y - reach);
        let end = self.centers.partition_point(|&c| c <= y + reach);
        let mut acc = T::zero();
        for i in start..end {
            acc = acc + self.weights[i] * gauss((y - self.centers[i]) / h);
        }
        acc * norm
    }

    pub fn evaluate_many(&self, ys: &[T]) -> Vec<T> {
        ys.par_iter().map(|&y| self.evaluate(y)).collect()
    }
}

/// Output PDF of a surrogate: predict the mean on a Latin hypercube design
/// of `pdf_sample_count` points and fit a KDE weighted by `p_x / q`, where
/// `q` is the design density.
pub fn surrogate_output_pdf<S, R>(
    model: &S,
    distribution: &InputDistribution,
    pdf_sample_count: usize,
    design: PdfDesign,
    rng: &mut R,
) -> Result<DensityEstimate<f64>>
where
    S: Surrogate + ?Sized,
    R: Rng + ?Sized,
{
    if model.input_dim() != distribution.dim() {
        return Err(FomoError::InvalidInput(format!(
            "surrogate takes {} inputs but distribution has {}",
            model.input_dim(),
            distribution.dim()
        )));
    }
    let (x, weights): (Array2<f64>, Vec<f64>) = match design {
        PdfDesign::Box => {
            let spec = DesignSpec::new(pdf_sample_count, Scheme::Lhs, distribution.clone());
            let x = latin_hypercube(&spec, rng)?;
            let w = x.rows().into_iter().map(|r| distribution.density_unchecked(&r.to_vec())).collect();
            (x, w)
        }
        PdfDesign::Distribution => {
            let x = latin_hypercube_in_distribution(distribution, pdf_sample_count, rng)?;
            (x, vec![1.0; pdf_sample_count])
        }
    };
    let mu = model.predict_mean_many(&x);
    fit_kde(mu.as_slice().expect("contiguous"), &weights)
}
