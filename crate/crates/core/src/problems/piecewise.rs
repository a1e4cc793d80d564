//! Linear core with logistic arms beyond `|x| = 2`.

use serde::{Deserialize, Serialize};

use super::Problem;
use crate::error::Result;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piecewise1D<T> {
    pub l: T,
    pub k: T,
    pub a: T,
    pub b: T,
}

impl<T: Real> Default for Piecewise1D<T> {
    fn default() -> Self {
        Piecewise1D { l: T::lit(20.0), k: T::one(), a: T::one(), b: T::lit(10.0) }
    }
}

impl<T: Real> Piecewise1D<T> {
    pub fn eval(&self, x: T) -> T {
        let two = T::lit(2.0);
        let half_l = self.l / two;
        let logistic = |shift: T| self.l / (T::one() + (-self.k * (x + shift)).exp()) - half_l;
        let core = self.a * x;
        let y = if x < -two {
            core + logistic(two)
        } else if x > two {
            core + logistic(-two)
        } else {
            core
        };
        y / self.b + T::one()
    }
}

/// The map with `L = 20, k = 1, a = 1, b = 10`.
pub fn piecewise_1d<T: Real>(x: T) -> T {
    Piecewise1D::default().eval(x)
}

impl Problem for Piecewise1D<f64> {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval(x[0]))
    }
}
