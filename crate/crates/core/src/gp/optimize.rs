//! Maximum-likelihood hyperparameter training: multi-start quasi-Newton
//! ascent in log space with backtracking and box projection.

use ndarray::{Array1, Array2};
use rand::Rng;

use super::{has_near_duplicates, log_evidence, log_evidence_value, GpHyperparams, GpModel, JITTER_MAX};
use crate::error::{FomoError, Result};
use crate::rng::StreamKey;
use crate::scalar::Real;
use crate::surrogate::SurrogateFactory;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GpFitOptions {
    pub restarts: usize,
    pub max_iter: usize,
    /// Fixed training noise variance.
    pub noise_variance: f64,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        GpFitOptions { restarts: 10, max_iter: 200, noise_variance: 0.0 }
    }
}

struct Problem<'a, T> {
    x: &'a Array2<T>,
    y: &'a Array1<T>,
    mean: T,
    noise: T,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<T: Real> Problem<'_, T> {
    fn hyper(&self, theta: &[f64]) -> GpHyperparams<T> {
        GpHyperparams {
            signal_variance: T::lit(theta[0].exp()),
            lengthscales: theta[1..].iter().map(|t| T::lit(t.exp())).collect(),
            noise_variance: self.noise,
            mean_constant: self.mean,
        }
    }

    /// Evidence and gradient; `None` where the Gram matrix cannot be factored.
    fn eval(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (v, g) = log_evidence(&self.hyper(theta), self.x, self.y).ok()?;
        let v = v.as_f64();
        let g: Vec<f64> = g.into_iter().map(Real::as_f64).collect();
        (v.is_finite() && g.iter().all(|x| x.is_finite())).then_some((v, g))
    }

    fn value(&self, theta: &[f64]) -> Option<f64> {
        let v = log_evidence_value(&self.hyper(theta), self.x, self.y).ok()?.as_f64();
        v.is_finite().then_some(v)
    }

    fn project(&self, theta: &mut [f64]) {
        for (t, (lo, hi)) in theta.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *t = t.clamp(*lo, *hi);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected gradient, zeroed where a bound blocks ascent.
fn free_gradient(theta: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    theta
        .iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((t, g), (l, h))| if (*t <= *l && *g < 0.0) || (*t >= *h && *g > 0.0) { 0.0 } else { *g })
        .collect()
}

/// BFGS ascent from `theta`; returns the best point found and its value.
fn ascend<T: Real>(p: &Problem<'_, T>, mut theta: Vec<f64>, max_iter: usize) -> Option<(Vec<f64>, f64)> {
    let k = theta.len();
    p.project(&mut theta);
    let (mut f, mut g) = p.eval(&theta)?;
    // Inverse-Hessian approximation of -f.
    let mut h = identity(k);
    for _ in 0..max_iter {
        let pg = free_gradient(&theta, &g, &p.lo, &p.hi);
        if pg.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-7 {
            break;
        }
        let mut dir = matvec(&h, &pg);
        if dot(&dir, &pg) <= 0.0 {
            h = identity(k);
            dir = pg.clone();
        }
        // Cap the step at 2 log-units per coordinate.
        let scale = dir.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if scale > 2.0 {
            dir.iter_mut().for_each(|v| *v *= 2.0 / scale);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            p.project(&mut cand);
            let moved: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
            if let Some(fc) = p.value(&cand) {
                if fc >= f + 1e-4 * dot(&pg, &moved) {
                    if let Some((fc, gc)) = p.eval(&cand) {
                        accepted = Some((cand, fc, gc, moved));
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc, s)) = accepted else { break };
        let improvement = fc - f;
        // BFGS update on the minimization problem -f.
        let yv: Vec<f64> = g.iter().zip(&gc).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            bfgs_update(&mut h, &s, &yv, sy);
        } else {
            h = identity(k);
        }
        theta = cand;
        f = fc;
        g = gc;
        if improvement.abs() < 1e-12 * (1.0 + f.abs()) {
            break;
        }
    }
    Some((theta, f))
}

fn identity(k: usize) -> Vec<Vec<f64>> {
    (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn matvec(h: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    h.iter().map(|row| dot(row, v)).collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let k = s.len();
    let rho = 1.0 / sy;
    let hy = matvec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..k {
        for j in 0..k {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Fit hyperparameters by maximizing the log marginal likelihood.
///
/// The mean constant is the training-output mean. Restart 0 starts from a
/// data-scaled guess, the others from random points; the best evidence wins
/// with ties resolved toward the lower restart index.
pub fn fit<T: Real, R: Rng + ?Sized>(
    x: &Array2<T>,
    y: &Array1<T>,
    options: &GpFitOptions,
    rng: &mut R,
) -> Result<GpModel<T>> {
    let n = x.nrows();
    if n < 2 || y.len() != n {
        return Err(FomoError::InvalidInput(format!(
            "GP fit needs at least two samples with matching outputs (got {n} inputs, {} outputs)",
            y.len()
        )));
    }
    let d = x.ncols();
    let noise = T::lit(options.noise_variance);
    if options.noise_variance == 0.0 && has_near_duplicates(x) {
        return Err(FomoError::IllConditioned { jitter: JITTER_MAX });
    }
    let mean = y.iter().copied().sum::<T>() / T::from_len(n);
    let var_y = (y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::from_len(n)).as_f64();
    let var_scale = if var_y > 0.0 { var_y } else { 1.0 };
    let ranges: Vec<f64> = (0..d)
        .map(|c| {
            let col = x.column(c);
            let lo = col.iter().copied().fold(T::infinity(), T::min).as_f64();
            let hi = col.iter().copied().fold(T::neg_infinity(), T::max).as_f64();
            if hi > lo { hi - lo } else { 1.0 }
        })
        .collect();
    let mut lo = vec![(1e-6 * var_scale).ln()];
    let mut hi = vec![(1e6 * var_scale).ln()];
    for r in &ranges {
        lo.push((1e-3 * r).ln());
        hi.push((1e3 * r).ln());
    }
    let problem = Problem { x, y, mean, noise, lo, hi };

    let mut best: Option<(Vec<f64>, f64)> = None;
    for restart in 0..options.restarts.max(1) {
        let start: Vec<f64> = if restart == 0 {
            std::iter::once(var_scale.ln()).chain(ranges.iter().map(|r| (0.2 * r).ln())).collect()
        } else {
            std::iter::once(var_scale.ln() + rng.random_range(-2.3..2.3))
                .chain(ranges.iter().map(|r| (r * rng.random_range(0.01..2.0f64)).ln()))
                .collect()
        };
        if let Some((theta, f)) = ascend(&problem, start, options.max_iter) {
            if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
                best = Some((theta, f));
            }
        }
    }
    let Some((theta, _)) = best else {
        return Err(FomoError::IllConditioned { jitter: JITTER_MAX });
    };
    GpModel::condition(problem.hyper(&theta), x.clone(), y.clone())
}

/// Trains GP surrogates inside the selection loop.
///
/// Restart points are drawn from a stream that depends only on the run seed,
/// so identical training sets always give identical models.
#[derive(Debug, Clone, Default)]
pub struct GpFactory {
    pub options: GpFitOptions,
}

impl SurrogateFactory for GpFactory {
    type Model = GpModel<f64>;

    fn train(&self, x: &Array2<f64>, y: &Array1<f64>, stream: &StreamKey) -> Result<GpModel<f64>> {
        let mut rng = StreamKey::new(stream.seed, "gp-restarts").rng();
        fit(x, y, &self.options, &mut rng)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
