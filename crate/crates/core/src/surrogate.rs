//! Surrogate abstraction: anything that emits a pointwise mean and variance.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::Result;
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

pub trait Surrogate: Send + Sync {
    fn input_dim(&self) -> usize;

    fn predict(&self, x: &[f64]) -> Prediction;

    /// Means and variances for every row of `x`.
    fn predict_many(&self, x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let preds: Vec<Prediction> = rows.par_iter().map(|r| self.predict(r)).collect();
        (
            preds.iter().map(|p| p.mean).collect(),
            preds.iter().map(|p| p.variance).collect(),
        )
    }

    /// Means only; backends may skip the variance computation.
    fn predict_mean_many(&self, x: &Array2<f64>) -> Array1<f64> {
        self.predict_many(x).0
    }
}

/// Trains a fresh surrogate on a training set.
pub trait SurrogateFactory: Sync {
    type Model: Surrogate;

    fn train(&self, x: &Array2<f64>, y: &Array1<f64>, stream: &StreamKey) -> Result<Self::Model>;

    /// True when retraining on identical data always yields an identical model.
    fn is_deterministic(&self) -> bool {
        false
    }
}
