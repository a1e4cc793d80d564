//! Sequential selection of informative training subsets from a fixed dataset.
//!
//! A surrogate (Gaussian process or neural-network ensemble) scores every
//! sample of the pool with the acquisition `a(x) = w(x) * sigma^2(x)`, where
//! `w(x) = p_x(x) / p_mu(mu(x))` is the likelihood ratio between the input
//! density and the surrogate's output density. The highest-scoring batch is
//! merged into the training set and the surrogate is retrained, until no new
//! samples are acquired.
//!
//! The numerical kernels are generic over [`Real`]; the aliases below fix
//! them to `f64`, which every experiment uses.

pub mod config;
pub mod density;
pub mod distribution;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod io;
pub mod metrics;
pub mod pool;
pub mod problems;
pub mod rng;
pub mod samplers;
pub mod scalar;
pub mod selection;
pub mod surrogate;

pub use config::{InitStrategy, PdfDesign, RunConfig};
pub use distribution::{DistributionKind, InputDistribution};
pub use error::{FomoError, Result};
pub use pool::{CandidatePool, Sample};
pub use rng::{seeded_rng, StreamKey};
pub use scalar::Real;
pub use surrogate::{Prediction, Surrogate, SurrogateFactory};

pub type DensityEstimate = density::DensityEstimate<f64>;
pub type GpHyperparams = gp::GpHyperparams<f64>;
pub type GpModel = gp::GpModel<f64>;
pub type Mlp = ensemble::Mlp<f64>;
pub type EnsembleModel = ensemble::EnsembleModel<f64>;
