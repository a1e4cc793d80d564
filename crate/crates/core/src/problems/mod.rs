//! Ground-truth input-output maps.

mod kl;
mod mmt;
mod piecewise;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

pub use kl::{build_kl_basis, initial_condition, kernel_matrix, KlBasis, KlParams};
pub use mmt::{mmt_evolve, wave_height_map, Dissipation, MmtConfig, MmtProblem, MmtSolver};
pub use piecewise::{piecewise_1d, Piecewise1D};

use crate::error::Result;

/// A deterministic scalar map `y = f(x)`.
pub trait Problem: Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    /// Evaluate every row; rows are independent and run in parallel.
    fn evaluate_many(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let ys = rows.par_iter().map(|r| self.evaluate(r)).collect::<Result<Vec<f64>>>()?;
        Ok(Array1::from(ys))
    }
}
