//! TOML experiment profiles and the shared test bench they build.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{run_fomo_batch, run_sweep, BatchOptions, ExperimentRecord, FomoBatch, PoolSource, Sampling, Scoring, SweepSpec};
use crate::config::RunConfig;
use crate::distribution::InputDistribution;
use crate::ensemble::{EnsembleFactory, MlpArchitecture};
use crate::error::{FomoError, Result};
use crate::gp::{GpFactory, GpFitOptions};
use crate::metrics::{build_test_suite, SuiteDesign, SuiteSizes, TestSuite};
use crate::pool::{read_dataset_file, write_dataset_file, Sample};
use crate::problems::{KlBasis, KlParams, MmtConfig, MmtProblem, Piecewise1D, Problem};
use crate::rng::seeded_rng;
use crate::DensityEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Piecewise1d,
    Mmt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateKind {
    Gp,
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSettings {
    pub kind: ProblemKind,
    #[serde(default)]
    pub mmt: MmtConfig,
    /// Complex KL modes; the input dimension is twice this.
    #[serde(default = "default_kl_modes")]
    pub kl_modes: usize,
    #[serde(default)]
    pub kl: KlParams,
    /// Defaults to a standard normal truncated to `[-6, 6]^d`.
    #[serde(default)]
    pub distribution: Option<InputDistribution>,
    /// Precompute this many samples once and draw replicate pools from them.
    #[serde(default)]
    pub dataset_size: Option<usize>,
    #[serde(default)]
    pub dataset_sampling: Option<Sampling>,
}

fn default_kl_modes() -> usize {
    4
}

impl ProblemSettings {
    pub fn dim(&self) -> usize {
        match self.kind {
            ProblemKind::Piecewise1d => 1,
            ProblemKind::Mmt => 2 * self.kl_modes,
        }
    }

    pub fn distribution(&self) -> Result<InputDistribution> {
        let d = self.distribution.clone().unwrap_or_else(|| InputDistribution::standard_normal(self.dim(), 6.0));
        d.validate()?;
        if d.dim() != self.dim() {
            return Err(FomoError::Config(format!("distribution has dimension {}, problem {}", d.dim(), self.dim())));
        }
        Ok(d)
    }

    pub fn build(&self) -> Result<Box<dyn Problem>> {
        Ok(match self.kind {
            ProblemKind::Piecewise1d => Box::new(Piecewise1D::<f64>::default()),
            ProblemKind::Mmt => {
                let basis = KlBasis::new(self.kl_modes, self.mmt.grid_size, self.kl)?;
                Box::new(MmtProblem::new(self.mmt.clone(), basis)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSettings {
    pub members: usize,
    pub architecture: MlpArchitecture,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        EnsembleSettings { members: 2, architecture: MlpArchitecture::desk_scale() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSettings {
    pub kind: SurrogateKind,
    #[serde(default)]
    pub gp: GpFitOptions,
    #[serde(default)]
    pub ensemble: EnsembleSettings,
}

impl SurrogateSettings {
    pub fn gp_factory(&self) -> GpFactory {
        GpFactory { options: self.gp.clone() }
    }

    pub fn ensemble_factory(&self) -> Result<EnsembleFactory> {
        self.ensemble.architecture.validate()?;
        if self.ensemble.members < 2 {
            return Err(FomoError::Config("ensemble needs at least two members".into()));
        }
        Ok(EnsembleFactory { architecture: self.ensemble.architecture.clone(), ensemble_size: self.ensemble.members })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSettings {
    pub pdf: usize,
    pub lhs: usize,
    pub design: SuiteDesign,
}

/// Sample sizes of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SizeGrid {
    List(Vec<usize>),
    Log { from: usize, to: usize, count: usize },
    Range { from: usize, to: usize },
}

impl SizeGrid {
    pub fn sizes(&self) -> Vec<usize> {
        match self {
            SizeGrid::List(v) => v.clone(),
            SizeGrid::Log { from, to, count } => SweepSpec::log_spaced(*from, *to, *count),
            SizeGrid::Range { from, to } => SweepSpec::range(*from, *to),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub sample_sizes: SizeGrid,
    pub replicates: usize,
    pub sampling: Sampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FomoSettings {
    pub replicates: usize,
    pub pool_size: usize,
    pub sampling: Sampling,
    #[serde(default)]
    pub full_reference: bool,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub name: String,
    pub seed: u64,
    pub problem: ProblemSettings,
    pub surrogate: SurrogateSettings,
    pub suite: SuiteSettings,
    #[serde(default)]
    pub sweep: Option<SweepSettings>,
    #[serde(default)]
    pub fomo: Option<FomoSettings>,
}

impl Profile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FomoError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| FomoError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FomoError::Config(e.to_string()))
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let s = self.sweep.as_ref().ok_or_else(|| FomoError::Config("profile has no [sweep] section".into()))?;
        let spec = SweepSpec {
            problem: self.problem.kind,
            surrogate: self.surrogate.kind,
            sample_sizes: s.sample_sizes.sizes(),
            replicates: s.replicates,
            sampling: s.sampling,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fomo_settings(&self) -> Result<&FomoSettings> {
        self.fomo.as_ref().ok_or_else(|| FomoError::Config("profile has no [fomo] section".into()))
    }

    /// Digest of everything the bench depends on, used to key cached data.
    pub fn bench_key(&self) -> String {
        let text = serde_json::to_string(&(&self.problem, &self.suite, self.seed)).expect("serializable");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Problem, input distribution, test suite and true output PDF of a profile.
pub struct Bench {
    pub profile: Profile,
    pub problem: Box<dyn Problem>,
    pub distribution: InputDistribution,
    pub suite: TestSuite,
    pub p_true: DensityEstimate,
    pub dataset: Option<Vec<Sample>>,
}

impl Bench {
    /// Build the bench, reading and writing cached suite and dataset files
    /// under `cache` when given.
    pub fn build(profile: &Profile, cache: Option<&Path>) -> Result<Self> {
        let problem = profile.problem.build()?;
        let distribution = profile.problem.distribution()?;
        let dir: Option<PathBuf> = cache.map(|c| c.join(format!("bench-{}", profile.bench_key())));
        let suite_dir = dir.as_ref().map(|d| d.join("suite"));
        let suite = match &suite_dir {
            Some(d) if TestSuite::exists(d) => TestSuite::load(d)?,
            _ => {
                let sizes = SuiteSizes { pdf: profile.suite.pdf, lhs: profile.suite.lhs };
                let mut rng = seeded_rng(profile.seed, "suite");
                let suite = build_test_suite(problem.as_ref(), &distribution, sizes, profile.suite.design, &mut rng)?;
                if let Some(d) = &suite_dir {
                    suite.save(d)?;
                }
                suite
            }
        };
        let dataset = match profile.problem.dataset_size {
            None => None,
            Some(n) => {
                let file = dir.as_ref().map(|d| d.join("dataset.csv"));
                match &file {
                    Some(f) if f.is_file() => Some(read_dataset_file(f)?),
                    _ => {
                        let sampling = profile.problem.dataset_sampling.unwrap_or(Sampling::LhsDistribution);
                        let mut rng = seeded_rng(profile.seed, "dataset");
                        let x = super::draw_inputs(&distribution, sampling, n, &mut rng)?;
                        let y = problem.evaluate_many(&x)?;
                        let samples: Vec<Sample> =
                            x.rows().into_iter().zip(y.iter()).map(|(r, &v)| Sample::new(r.to_vec(), v)).collect();
                        if let Some(f) = &file {
                            write_dataset_file(f, &samples)?;
                        }
                        Some(samples)
                    }
                }
            }
        };
        let p_true = suite.true_pdf()?;
        Ok(Bench { profile: profile.clone(), problem, distribution, suite, p_true, dataset })
    }

    pub fn scoring(&self) -> Scoring<'_> {
        Scoring { suite: &self.suite, p_true: &self.p_true }
    }

    pub fn source(&self, sampling: Sampling) -> PoolSource<'_> {
        match &self.dataset {
            Some(d) => PoolSource::Dataset(d),
            None => PoolSource::Fresh { problem: self.problem.as_ref(), distribution: &self.distribution, sampling },
        }
    }

    pub fn sweep(&self, spec: &SweepSpec) -> Result<Vec<ExperimentRecord>> {
        let source = self.source(spec.sampling);
        let surrogate = &self.profile.surrogate;
        match spec.surrogate {
            SurrogateKind::Gp => run_sweep(spec, source, &surrogate.gp_factory(), &self.scoring()),
            SurrogateKind::Ensemble => run_sweep(spec, source, &surrogate.ensemble_factory()?, &self.scoring()),
        }
    }

    pub fn fomo(&self, settings: &FomoSettings, dump_scores: bool) -> Result<FomoBatch> {
        self.fomo_with(settings, BatchOptions { full_reference: settings.full_reference, dump_scores, save_models: None })
    }

    pub fn fomo_with(&self, settings: &FomoSettings, options: BatchOptions) -> Result<FomoBatch> {
        let source = self.source(settings.sampling);
        let surrogate = &self.profile.surrogate;
        let scoring = self.scoring();
        let seed = self.profile.seed;
        match surrogate.kind {
            SurrogateKind::Gp => run_fomo_batch(
                settings.replicates,
                settings.pool_size,
                seed,
                &settings.run,
                source,
                &surrogate.gp_factory(),
                &self.distribution,
                &scoring,
                options,
            ),
            SurrogateKind::Ensemble => run_fomo_batch(
                settings.replicates,
                settings.pool_size,
                seed,
                &settings.run,
                source,
                &surrogate.ensemble_factory()?,
                &self.distribution,
                &scoring,
                options,
            ),
        }
    }
}
