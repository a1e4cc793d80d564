//! Run configuration for the selection loop.

use serde::{Deserialize, Serialize};

use crate::error::{FomoError, Result};

/// How the first training subset is picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Train on the whole pool, then keep the `n_init` highest likelihood ratios.
    #[default]
    FullData,
    /// Draw `n_init` samples uniformly at random.
    Random,
}

/// Design used to estimate the surrogate output PDF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdfDesign {
    /// Latin hypercube over the input box, KDE weights `p_x(x)`.
    #[default]
    Box,
    /// Latin hypercube in the probability space of `p_x`, uniform KDE weights.
    Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Acquisition batch size.
    pub n_a: usize,
    /// Size of the initial subset; defaults to `n_a`.
    #[serde(default)]
    pub n_init: Option<usize>,
    pub n_iter_max: usize,
    pub pdf_sample_count: usize,
    pub seed: u64,
    #[serde(default = "default_patience")]
    pub convergence_patience: usize,
    #[serde(default)]
    pub init: InitStrategy,
    #[serde(default)]
    pub pdf_design: PdfDesign,
}

fn default_patience() -> usize {
    3
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_a: 50,
            n_init: None,
            n_iter_max: 100,
            pdf_sample_count: 100_000,
            seed: 0,
            convergence_patience: default_patience(),
            init: InitStrategy::FullData,
            pdf_design: PdfDesign::Box,
        }
    }
}

impl RunConfig {
    pub fn n_init(&self) -> usize {
        self.n_init.unwrap_or(self.n_a)
    }

    /// Check the config against a pool of `n` samples.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_a == 0 {
            return Err(FomoError::Config("n_a must be at least 1".into()));
        }
        if self.n_init() == 0 || self.n_init() > n {
            return Err(FomoError::Config(format!(
                "n_init = {} must lie in 1..={n}",
                self.n_init()
            )));
        }
        if self.n_iter_max == 0 {
            return Err(FomoError::Config("n_iter_max must be positive".into()));
        }
        if self.pdf_sample_count < 1000 {
            return Err(FomoError::Config("pdf_sample_count must be at least 1000".into()));
        }
        if self.convergence_patience == 0 {
            return Err(FomoError::Config("convergence_patience must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_batch_size() {
        let cfg = RunConfig { n_a: 7, ..Default::default() };
        assert_eq!(cfg.n_init(), 7);
        assert_eq!(cfg.convergence_patience, 3);
    }

    #[test]
    fn toml_roundtrip_and_defaults() {
        let cfg: RunConfig = toml::from_str(
            "n_a = 2\nn_iter_max = 40\npdf_sample_count = 10000\nseed = 5\ninit = \"random\"\n",
        )
        .unwrap();
        assert_eq!(cfg.n_init(), 2);
        assert_eq!(cfg.init, InitStrategy::Random);
        assert_eq!(cfg.pdf_design, PdfDesign::Box);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn validation() {
        let cfg = RunConfig { n_a: 5, pdf_sample_count: 1000, ..Default::default() };
        assert!(cfg.validate(10).is_ok());
        assert!(cfg.validate(4).is_err());
        assert!(RunConfig { pdf_sample_count: 999, ..cfg.clone() }.validate(10).is_err());
        assert!(RunConfig { n_a: 0, ..cfg }.validate(10).is_err());
    }
}
