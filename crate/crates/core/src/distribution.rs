//! Input distribution `p_x` over a bounded box.

use serde::{Deserialize, Serialize};

use crate::error::{FomoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionKind {
    IndependentGaussian,
    UniformBox,
}

/// Product distribution over a box `[lo_j, hi_j]`.
///
/// For the Gaussian kind, sampling is truncated to the box by rejection but
/// [`InputDistribution::density`] returns the untruncated product density;
/// the mass beyond six standard deviations is about `2e-9`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDistribution {
    pub kind: DistributionKind,
    pub means: Vec<f64>,
    pub stdevs: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputDistribution {
    pub fn gaussian(means: Vec<f64>, stdevs: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = InputDistribution { kind: DistributionKind::IndependentGaussian, means, stdevs, lo, hi };
        d.validate()?;
        Ok(d)
    }

    /// `d` independent standard normals truncated to `±half_width`.
    pub fn standard_normal(d: usize, half_width: f64) -> Self {
        Self::gaussian(vec![0.0; d], vec![1.0; d], vec![-half_width; d], vec![half_width; d])
            .expect("valid standard normal")
    }

    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = lo.len();
        let means = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let stdevs = lo.iter().zip(&hi).map(|(a, b)| (b - a) / 12f64.sqrt()).collect();
        let dist = InputDistribution { kind: DistributionKind::UniformBox, means, stdevs, lo, hi };
        debug_assert_eq!(dist.dim(), d);
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lo.len();
        if d == 0 || self.hi.len() != d || self.means.len() != d || self.stdevs.len() != d {
            return Err(FomoError::Config("distribution vectors must share a nonzero length".into()));
        }
        for j in 0..d {
            if !(self.stdevs[j] > 0.0) {
                return Err(FomoError::Config(format!("stdev[{j}] must be positive")));
            }
            if !(self.lo[j] < self.hi[j]) {
                return Err(FomoError::Config(format!("bounds[{j}] must satisfy lo < hi")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Density with the domain check skipped.
    pub fn density_unchecked(&self, x: &[f64]) -> f64 {
        match self.kind {
            DistributionKind::IndependentGaussian => {
                let mut log_p = 0.0;
                for j in 0..self.dim() {
                    let z = (x[j] - self.means[j]) / self.stdevs[j];
                    log_p += -0.5 * z * z - self.stdevs[j].ln();
                }
                let norm = (2.0 * std::f64::consts::PI).powf(-0.5 * self.dim() as f64);
                norm * log_p.exp()
            }
            DistributionKind::UniformBox => {
                let vol: f64 = self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product();
                1.0 / vol
            }
        }
    }

    /// `p_x(x)`; errors when `x` lies outside the box.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        if !self.contains(x) {
            return Err(FomoError::Domain(format!("{x:?} outside the input box")));
        }
        Ok(self.density_unchecked(x))
    }
}
