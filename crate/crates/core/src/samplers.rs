//! Candidate-pool and test-set designs: uniform, truncated Gaussian, and
//! Latin hypercube sampling over the input box.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::distribution::{DistributionKind, InputDistribution};
use crate::error::{FomoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Uniform,
    Gaussian,
    Lhs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub count: usize,
    pub dims: usize,
    pub scheme: Scheme,
    pub distribution: InputDistribution,
}

impl DesignSpec {
    pub fn new(count: usize, scheme: Scheme, distribution: InputDistribution) -> Self {
        DesignSpec { count, dims: distribution.dim(), scheme, distribution }
    }

    fn validate(&self, expected: Scheme) -> Result<()> {
        if self.scheme != expected {
            return Err(FomoError::InvalidInput(format!(
                "design scheme {:?} where {expected:?} was required",
                self.scheme
            )));
        }
        if self.count == 0 {
            return Err(FomoError::InvalidInput("design count must be at least 1".into()));
        }
        if self.dims != self.distribution.dim() {
            return Err(FomoError::InvalidInput(format!(
                "design has {} dims but distribution has {}",
                self.dims,
                self.distribution.dim()
            )));
        }
        Ok(())
    }
}

/// Dispatch on `spec.scheme`.
pub fn generate<R: Rng + ?Sized>(spec: &DesignSpec, rng: &mut R) -> Result<Array2<f64>> {
    match spec.scheme {
        Scheme::Uniform => uniform_design(spec, rng),
        Scheme::Gaussian => gaussian_design(spec, rng),
        Scheme::Lhs => latin_hypercube(spec, rng),
    }
}

/// Stratified unit-interval samples: column `j` holds one point in each of
/// `count` equal strata, strata visited in a random order.
fn unit_hypercube<R: Rng + ?Sized>(count: usize, dims: usize, rng: &mut R) -> Array2<f64> {
    let mut out = Array2::zeros((count, dims));
    let mut perm: Vec<usize> = (0..count).collect();
    let n = count as f64;
    for j in 0..dims {
        perm.shuffle(rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let jitter: f64 = rng.random();
            out[[i, j]] = (stratum as f64 + jitter) / n;
        }
    }
    out
}

/// Latin hypercube over `[lo, hi]` per dimension.
pub fn latin_hypercube<R: Rng + ?Sized>(spec: &DesignSpec, rng: &mut R) -> Result<Array2<f64>> {
    spec.validate(Scheme::Lhs)?;
    let dist = &spec.distribution;
    let mut x = unit_hypercube(spec.count, spec.dims, rng);
    for mut row in x.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            // Clamp guards the `stratum + 1.0 - eps` rounding case.
            *v = (dist.lo[j] + *v * (dist.hi[j] - dist.lo[j])).min(dist.hi[j]);
        }
    }
    Ok(x)
}

/// Latin hypercube in the probability space of `distribution`: each column
/// is stratified in the marginal CDF (truncated to the box) and mapped back
/// through the inverse CDF.
pub fn latin_hypercube_in_distribution<R: Rng + ?Sized>(
    distribution: &InputDistribution,
    count: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    if count == 0 {
        return Err(FomoError::InvalidInput("design count must be at least 1".into()));
    }
    let d = distribution.dim();
    let mut x = unit_hypercube(count, d, rng);
    match distribution.kind {
        DistributionKind::UniformBox => {
            for mut row in x.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = distribution.lo[j] + *v * (distribution.hi[j] - distribution.lo[j]);
                }
            }
        }
        DistributionKind::IndependentGaussian => {
            let std = StdNormal::standard();
            let limits: Vec<(f64, f64)> = (0..d)
                .map(|j| {
                    let a = (distribution.lo[j] - distribution.means[j]) / distribution.stdevs[j];
                    let b = (distribution.hi[j] - distribution.means[j]) / distribution.stdevs[j];
                    (std.cdf(a), std.cdf(b))
                })
                .collect();
            for mut row in x.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    let (ca, cb) = limits[j];
                    let z = std.inverse_cdf(ca + *v * (cb - ca));
                    *v = (distribution.means[j] + distribution.stdevs[j] * z)
                        .clamp(distribution.lo[j], distribution.hi[j]);
                }
            }
        }
    }
    Ok(x)
}

/// I.i.d. uniform draws over the box.
pub fn uniform_design<R: Rng + ?Sized>(spec: &DesignSpec, rng: &mut R) -> Result<Array2<f64>> {
    spec.validate(Scheme::Uniform)?;
    let dist = &spec.distribution;
    Ok(Array2::from_shape_fn((spec.count, spec.dims), |(_, j)| {
        rng.random_range(dist.lo[j]..=dist.hi[j])
    }))
}

/// I.i.d. draws from `N(mean, stdev²)` per dimension, truncated to the box by
/// rejection. For a uniform-box distribution this falls back to uniform draws.
pub fn gaussian_design<R: Rng + ?Sized>(spec: &DesignSpec, rng: &mut R) -> Result<Array2<f64>> {
    spec.validate(Scheme::Gaussian)?;
    let dist = &spec.distribution;
    if dist.kind == DistributionKind::UniformBox {
        return uniform_design(&DesignSpec { scheme: Scheme::Uniform, ..spec.clone() }, rng);
    }
    let normals: Vec<Normal<f64>> = (0..spec.dims)
        .map(|j| Normal::new(dist.means[j], dist.stdevs[j]).expect("positive stdev"))
        .collect();
    let mut out = Array2::zeros((spec.count, spec.dims));
    for i in 0..spec.count {
        for j in 0..spec.dims {
            out[[i, j]] = loop {
                let v = normals[j].sample(rng);
                if v >= dist.lo[j] && v <= dist.hi[j] {
                    break v;
                }
            };
        }
    }
    Ok(out)
}

/// `p_x(x)`: product of marginal densities; errors outside the box.
pub fn density_at(distribution: &InputDistribution, x: &[f64]) -> Result<f64> {
    distribution.density(x)
}
