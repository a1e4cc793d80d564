//! Ensembles of independently initialized networks as a mean/variance
//! surrogate.
//!
//! Members share the architecture and the training set and differ only in
//! their initialization and shuffling streams. The ensemble mean is the
//! member average and the variance the unbiased member variance.

mod checkpoint;
mod mlp;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_member, save_checkpoint, write_member};
pub use mlp::{backprop_gradient, mse_loss, Adam, Dense, Gradient, Mlp};

use crate::error::{FomoError, Result};
use crate::rng::StreamKey;
use crate::scalar::Real;
use crate::surrogate::{Prediction, Surrogate, SurrogateFactory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
}

/// Mini-batch size. `Auto` is full-batch up to 1024 samples, 256 above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "BatchRepr", into = "BatchRepr")]
pub enum BatchSize {
    #[default]
    Auto,
    Full,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BatchRepr {
    Size(usize),
    Named(String),
}

impl TryFrom<BatchRepr> for BatchSize {
    type Error = String;

    fn try_from(r: BatchRepr) -> std::result::Result<Self, String> {
        match r {
            BatchRepr::Size(0) => Err("batch size must be positive".into()),
            BatchRepr::Size(n) => Ok(BatchSize::Fixed(n)),
            BatchRepr::Named(s) if s == "full" => Ok(BatchSize::Full),
            BatchRepr::Named(s) if s == "auto" => Ok(BatchSize::Auto),
            BatchRepr::Named(s) => Err(format!("unknown batch size `{s}`")),
        }
    }
}

impl From<BatchSize> for BatchRepr {
    fn from(b: BatchSize) -> Self {
        match b {
            BatchSize::Auto => BatchRepr::Named("auto".into()),
            BatchSize::Full => BatchRepr::Named("full".into()),
            BatchSize::Fixed(n) => BatchRepr::Size(n),
        }
    }
}

impl BatchSize {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            BatchSize::Auto if n <= 1024 => n,
            BatchSize::Auto => 256,
            BatchSize::Full => n,
            BatchSize::Fixed(b) => b.min(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpArchitecture {
    /// Hidden layers.
    pub depth: usize,
    /// Neurons per hidden layer.
    pub width: usize,
    #[serde(default)]
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub batch_size: BatchSize,
}

impl MlpArchitecture {
    /// 8 hidden layers of 250, 1000 epochs.
    pub fn paper_scale() -> Self {
        MlpArchitecture {
            depth: 8,
            width: 250,
            activation: Activation::Relu,
            epochs: 1000,
            learning_rate: 1e-3,
            batch_size: BatchSize::Auto,
        }
    }

    /// 4 hidden layers of 64.
    pub fn desk_scale() -> Self {
        MlpArchitecture { depth: 4, width: 64, ..Self::paper_scale() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.epochs == 0 {
            return Err(FomoError::Config("depth, width and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(FomoError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Per-column affine standardization `(v - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub shift: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> Standardizer<T> {
    pub fn fit(x: ArrayView2<T>) -> Self {
        let n = T::from_len(x.nrows());
        let mut shift = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.iter().copied().sum::<T>() / n;
            let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n;
            let sd = var.sqrt();
            shift.push(m);
            // A column without spread gets scale 0: it normalizes to 0 and maps back to its mean.
            scale.push(if sd > T::epsilon() * (T::one() + m.abs()) { sd } else { T::zero() });
        }
        Standardizer { shift, scale }
    }

    pub fn fit_vector(y: ArrayView1<T>) -> Self {
        Self::fit(y.insert_axis(Axis(1)))
    }

    pub fn normalize(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| scaled(v - self.shift[j], self.scale[j]));
        }
        out
    }

    pub fn normalize_scalar(&self, v: T) -> T {
        scaled(v - self.shift[0], self.scale[0])
    }

    pub fn denormalize_scalar(&self, v: T) -> T {
        v * self.scale[0] + self.shift[0]
    }

    pub fn denormalize(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| v * self.scale[j] + self.shift[j]);
        }
        out
    }
}

fn scaled<T: Real>(centered: T, scale: T) -> T {
    if scale == T::zero() {
        T::zero()
    } else {
        centered / scale
    }
}

/// Mean and unbiased variance of member outputs.
pub fn member_statistics<T: Real>(outputs: &[T]) -> (T, T) {
    let n = T::from_len(outputs.len());
    // Offsets from the first output keep agreeing members at exactly zero spread.
    let pivot = outputs.first().copied().unwrap_or_else(T::zero);
    let offset = outputs.iter().map(|&o| o - pivot).sum::<T>() / n;
    let mean = pivot + offset;
    if outputs.len() < 2 {
        return (mean, T::zero());
    }
    let ss = outputs.iter().map(|&o| (o - pivot - offset) * (o - pivot - offset)).sum::<T>();
    (mean, ss / (n - T::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel<T> {
    pub members: Vec<Mlp<T>>,
    pub architecture: MlpArchitecture,
    pub input_normalizer: Standardizer<T>,
    pub output_normalizer: Standardizer<T>,
}

/// Train one member from scratch on normalized data.
pub fn train_member<T: Real>(
    x: ArrayView2<T>,
    y: ArrayView1<T>,
    arch: &MlpArchitecture,
    member: usize,
    stream: &StreamKey,
) -> Result<Mlp<T>> {
    let mut rng = stream.rng();
    let mut net = Mlp::glorot(x.ncols(), arch.depth, arch.width, &mut rng);
    let mut adam = Adam::new(T::lit(arch.learning_rate), net.param_count());
    let n = x.nrows();
    let batch = arch.batch_size.resolve(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..arch.epochs {
        if batch >= n {
            let (loss, grad) = backprop_gradient(&net, x, y);
            if !loss.is_finite() {
                return Err(FomoError::TrainingDiverged { member });
            }
            adam.step(&mut net, &grad);
            continue;
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let (loss, grad) = backprop_gradient(&net, xb.view(), yb.view());
            if !loss.is_finite() {
                return Err(FomoError::TrainingDiverged { member });
            }
            adam.step(&mut net, &grad);
        }
    }
    if net.params().any(|p| !p.is_finite()) {
        return Err(FomoError::TrainingDiverged { member });
    }
    Ok(net)
}

/// Train `ensemble_size` members independently; member `i` draws from
/// `stream/member-i`, so results do not depend on scheduling.
pub fn train_ensemble<T: Real>(
    x: ArrayView2<T>,
    y: ArrayView1<T>,
    arch: &MlpArchitecture,
    ensemble_size: usize,
    stream: &StreamKey,
) -> Result<EnsembleModel<T>> {
    arch.validate()?;
    if ensemble_size < 2 {
        return Err(FomoError::Config("ensemble needs at least two members".into()));
    }
    if x.nrows() < 2 || x.nrows() != y.len() {
        return Err(FomoError::InvalidInput(format!(
            "ensemble training needs at least two aligned samples (got {} inputs, {} outputs)",
            x.nrows(),
            y.len()
        )));
    }
    let input_normalizer = Standardizer::fit(x);
    let output_normalizer = Standardizer::fit_vector(y);
    let xn = input_normalizer.normalize(x);
    let yn = y.mapv(|v| output_normalizer.normalize_scalar(v));
    let members = (0..ensemble_size)
        .into_par_iter()
        .map(|i| train_member(xn.view(), yn.view(), arch, i, &stream.child(format_args!("member-{i}"))))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel { members, architecture: arch.clone(), input_normalizer, output_normalizer })
}

const PREDICT_CHUNK: usize = 8192;

impl<T: Real> EnsembleModel<T> {
    pub fn ensemble_size(&self) -> usize {
        self.members.len()
    }

    /// Denormalized outputs of every member, `members x rows`.
    pub fn member_outputs(&self, x: ArrayView2<T>) -> Array2<T> {
        let n = x.nrows();
        let mut out = Array2::zeros((self.members.len(), n));
        let chunks: Vec<(usize, usize)> = (0..n).step_by(PREDICT_CHUNK).map(|a| (a, (a + PREDICT_CHUNK).min(n))).collect();
        let parts: Vec<Array2<T>> = chunks
            .par_iter()
            .map(|&(a, b)| {
                let xn = self.input_normalizer.normalize(x.slice(s![a..b, ..]));
                let mut part = Array2::zeros((self.members.len(), b - a));
                for (m, net) in self.members.iter().enumerate() {
                    let o = net.forward(xn.view());
                    part.row_mut(m).assign(&o.mapv(|v| self.output_normalizer.denormalize_scalar(v)));
                }
                part
            })
            .collect();
        for (&(a, b), part) in chunks.iter().zip(parts) {
            out.slice_mut(s![.., a..b]).assign(&part);
        }
        out
    }

    /// Ensemble mean and unbiased member variance at each row.
    pub fn predict_ensemble_many(&self, x: ArrayView2<T>) -> (Array1<T>, Array1<T>) {
        let outs = self.member_outputs(x);
        let mut mean = Array1::zeros(x.nrows());
        let mut var = Array1::zeros(x.nrows());
        for (i, col) in outs.columns().into_iter().enumerate() {
            let (m, v) = member_statistics(&col.to_vec());
            mean[i] = m;
            var[i] = v;
        }
        (mean, var)
    }

    pub fn predict_ensemble(&self, x: ArrayView1<T>) -> (T, T) {
        let (m, v) = self.predict_ensemble_many(x.insert_axis(Axis(0)));
        (m[0], v[0])
    }
}

impl Surrogate for EnsembleModel<f64> {
    fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    fn predict(&self, x: &[f64]) -> Prediction {
        let (mean, variance) = self.predict_ensemble(ArrayView1::from(x));
        Prediction { mean, variance }
    }

    fn predict_many(&self, x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
        self.predict_ensemble_many(x.view())
    }

    fn predict_mean_many(&self, x: &Array2<f64>) -> Array1<f64> {
        self.predict_ensemble_many(x.view()).0
    }
}

/// Trains ensemble surrogates inside the selection loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFactory {
    pub architecture: MlpArchitecture,
    pub ensemble_size: usize,
}

impl SurrogateFactory for EnsembleFactory {
    type Model = EnsembleModel<f64>;

    fn train(&self, x: &Array2<f64>, y: &Array1<f64>, stream: &StreamKey) -> Result<Self::Model> {
        train_ensemble(x.view(), y.view(), &self.architecture, self.ensemble_size, stream)
    }
}
