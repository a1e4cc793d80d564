//! Test errors: normalized MSE and the log-PDF error.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::PdfDesign;
use crate::density::{fit_kde, linspace, GRID_POINTS};
use crate::DensityEstimate;
use crate::distribution::InputDistribution;
use crate::error::{FomoError, Result};
use crate::pool::{read_dataset_file, write_dataset_file, Sample};
use crate::problems::Problem;
use crate::samplers::{generate, latin_hypercube_in_distribution, DesignSpec, Scheme};
use crate::surrogate::Surrogate;

/// Relative floor applied to both densities before taking logs.
pub const LOG_PDF_FLOOR: f64 = 1e-12;

/// `Σ(y - μ)² / Σy²`, optionally times `1/(n - 1)`.
pub fn normalized_mse(y_true: &[f64], y_pred: &[f64], include_prefactor: bool) -> Result<f64> {
    if y_true.is_empty() || y_true.len() != y_pred.len() {
        return Err(FomoError::InvalidInput(format!(
            "need equal nonzero lengths, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let energy: f64 = y_true.iter().map(|y| y * y).sum();
    if energy == 0.0 {
        return Err(FomoError::UndefinedNormalization);
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(y, m)| (y - m) * (y - m)).sum();
    let ratio = sse / energy;
    if include_prefactor {
        if y_true.len() < 2 {
            return Err(FomoError::InvalidInput("the 1/(n-1) prefactor needs n >= 2".into()));
        }
        Ok(ratio / (y_true.len() - 1) as f64)
    } else {
        Ok(ratio)
    }
}

/// Grid spanning both supports, shared by the log-PDF integrand.
pub fn union_grid(a: &DensityEstimate, b: &DensityEstimate) -> Vec<f64> {
    let (alo, ahi) = a.support();
    let (blo, bhi) = b.support();
    linspace(alo.min(blo), ahi.max(bhi), GRID_POINTS)
}

/// `∫ |log10 p_model - log10 p_true| dy` by the trapezoid rule on the union grid.
pub fn log_pdf_error(p_true: &DensityEstimate, p_model: &DensityEstimate) -> f64 {
    let grid = union_grid(p_true, p_model);
    let floor = LOG_PDF_FLOOR * p_true.max_grid_density().max(p_model.max_grid_density());
    let a = p_true.evaluate_many(&grid);
    let b = p_model.evaluate_many(&grid);
    let f: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(p, q)| (p.max(floor).log10() - q.max(floor).log10()).abs())
        .collect();
    let dy = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if dy == 0.0 {
        return 0.0;
    }
    dy * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[f.len() - 1]))
}

/// Held-out inputs and true outputs.
///
/// `x_pdf` follows `p_x` and scores the MSE; `x_lhs` covers the input box and,
/// with `lhs_weights`, defines the true output PDF.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSuite {
    pub x_pdf: Array2<f64>,
    pub y_pdf: Array1<f64>,
    pub x_lhs: Array2<f64>,
    pub y_lhs: Array1<f64>,
    pub lhs_weights: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSizes {
    pub pdf: usize,
    pub lhs: usize,
}

/// How the PDF-error set is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteDesign {
    /// I.i.d. uniform over the box, weights `p_x`.
    Uniform,
    /// Latin hypercube over the box, weights `p_x`.
    Lhs,
    /// Latin hypercube in the probability space of `p_x`, uniform weights.
    Distribution,
}

impl From<PdfDesign> for SuiteDesign {
    fn from(d: PdfDesign) -> Self {
        match d {
            PdfDesign::Box => SuiteDesign::Lhs,
            PdfDesign::Distribution => SuiteDesign::Distribution,
        }
    }
}

fn rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn build_test_suite<P, R>(
    problem: &P,
    distribution: &InputDistribution,
    sizes: SuiteSizes,
    design: SuiteDesign,
    rng: &mut R,
) -> Result<TestSuite>
where
    P: Problem + ?Sized,
    R: Rng + ?Sized,
{
    if problem.dim() != distribution.dim() {
        return Err(FomoError::InvalidInput(format!(
            "problem takes {} inputs but distribution has {}",
            problem.dim(),
            distribution.dim()
        )));
    }
    let x_pdf = generate(&DesignSpec::new(sizes.pdf, Scheme::Gaussian, distribution.clone()), rng)?;
    let (x_lhs, lhs_weights) = match design {
        SuiteDesign::Distribution => {
            (latin_hypercube_in_distribution(distribution, sizes.lhs, rng)?, Array1::ones(sizes.lhs))
        }
        SuiteDesign::Uniform | SuiteDesign::Lhs => {
            let scheme = if design == SuiteDesign::Uniform { Scheme::Uniform } else { Scheme::Lhs };
            let x = generate(&DesignSpec::new(sizes.lhs, scheme, distribution.clone()), rng)?;
            let w = rows(&x).iter().map(|r| distribution.density_unchecked(r)).collect();
            (x, w)
        }
    };
    let y_pdf = problem.evaluate_many(&x_pdf)?;
    let y_lhs = problem.evaluate_many(&x_lhs)?;
    let suite = TestSuite { x_pdf, y_pdf, x_lhs, y_lhs, lhs_weights };
    suite.validate()?;
    Ok(suite)
}

const PDF_FILE: &str = "test_pdf.csv";
const LHS_FILE: &str = "test_lhs.csv";
const WEIGHTS_FILE: &str = "test_lhs_weights.csv";

impl TestSuite {
    pub fn validate(&self) -> Result<()> {
        if self.x_pdf.nrows() != self.y_pdf.len()
            || self.x_lhs.nrows() != self.y_lhs.len()
            || self.lhs_weights.len() != self.y_lhs.len()
        {
            return Err(FomoError::InvalidInput("test suite row counts disagree".into()));
        }
        let finite = |a: &Array1<f64>| a.iter().all(|v| v.is_finite());
        if !finite(&self.y_pdf) || !finite(&self.y_lhs) {
            return Err(FomoError::InvalidInput("test suite has non-finite outputs".into()));
        }
        Ok(())
    }

    /// True output PDF `p_f`.
    pub fn true_pdf(&self) -> Result<DensityEstimate> {
        fit_kde(self.y_lhs.as_slice().expect("contiguous"), self.lhs_weights.as_slice().expect("contiguous"))
    }

    /// Model output PDF on the same design and weights as `p_f`.
    pub fn model_pdf<S: Surrogate + ?Sized>(&self, model: &S) -> Result<DensityEstimate> {
        let mu = model.predict_mean_many(&self.x_lhs);
        fit_kde(mu.as_slice().expect("contiguous"), self.lhs_weights.as_slice().expect("contiguous"))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_dataset_file(dir.join(PDF_FILE), &to_samples(&self.x_pdf, &self.y_pdf))?;
        write_dataset_file(dir.join(LHS_FILE), &to_samples(&self.x_lhs, &self.y_lhs))?;
        crate::io::write_atomic(dir.join(WEIGHTS_FILE), |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(["w"])?;
            for v in &self.lhs_weights {
                out.write_record([format!("{v:.16e}")])?;
            }
            out.flush()?;
            Ok(())
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (x_pdf, y_pdf) = from_samples(&read_dataset_file(dir.join(PDF_FILE))?)?;
        let (x_lhs, y_lhs) = from_samples(&read_dataset_file(dir.join(LHS_FILE))?)?;
        let mut reader = csv::Reader::from_path(dir.join(WEIGHTS_FILE))?;
        let mut weights = Vec::new();
        for record in reader.records() {
            let record = record?;
            let v: f64 = record[0]
                .trim()
                .parse()
                .map_err(|e| FomoError::InvalidInput(format!("bad weight {:?}: {e}", &record[0])))?;
            weights.push(v);
        }
        let suite = TestSuite { x_pdf, y_pdf, x_lhs, y_lhs, lhs_weights: Array1::from(weights) };
        suite.validate()?;
        Ok(suite)
    }

    pub fn exists(dir: &Path) -> bool {
        [PDF_FILE, LHS_FILE, WEIGHTS_FILE].iter().all(|f| dir.join(f).is_file())
    }
}

fn to_samples(x: &Array2<f64>, y: &Array1<f64>) -> Vec<Sample> {
    x.rows().into_iter().zip(y).map(|(r, &v)| Sample::new(r.to_vec(), v)).collect()
}

fn from_samples(samples: &[Sample]) -> Result<(Array2<f64>, Array1<f64>)> {
    let d = samples.first().map_or(0, Sample::dim);
    let flat: Vec<f64> = samples.iter().flat_map(|s| s.x.iter().copied()).collect();
    let x = Array2::from_shape_vec((samples.len(), d), flat)
        .map_err(|e| FomoError::InvalidInput(format!("ragged dataset: {e}")))?;
    Ok((x, samples.iter().map(|s| s.y).collect()))
}

/// Both errors of one trained surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub e_mse: f64,
    pub e_mse_paper: f64,
    pub e_logpdf: f64,
}

/// Score `model` against `suite`; `p_true` is the suite's true PDF, fitted once by the caller.
pub fn evaluate_surrogate<S: Surrogate + ?Sized>(
    model: &S,
    suite: &TestSuite,
    p_true: &DensityEstimate,
) -> Result<Evaluation> {
    let mu = model.predict_mean_many(&suite.x_pdf);
    let y = suite.y_pdf.as_slice().expect("contiguous");
    let mu = mu.as_slice().expect("contiguous");
    Ok(Evaluation {
        e_mse: normalized_mse(y, mu, false)?,
        e_mse_paper: normalized_mse(y, mu, true)?,
        e_logpdf: log_pdf_error(p_true, &suite.model_pdf(model)?),
    })
}

#[cfg(test)]
mod tests;
