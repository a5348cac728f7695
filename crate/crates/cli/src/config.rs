//! Run configuration files.
//!
//! A config is a JSON object; every field is optional and unknown keys are
//! rejected. Command-line flags override the file.
//!
//! ```json
//! {
//!   "model": "lddp-bs",
//!   "options": { "truncation": 20, "alpha": 1.0, "lddp_prior": "data-driven" },
//!   "mcmc": { "iterations": 10000, "burn_in": 5000, "thin": 5, "seed": 1 },
//!   "data": "ex1.csv",
//!   "out": "runs/ex1-lddp-bs",
//!   "test": { "example": 1, "size": 200, "seed": 20240917 }
//! }
//! ```

use std::path::{Path, PathBuf};

use depmix_core::inference::McmcConfig;
use depmix_core::models::{ModelFamily, ModelOptions};
use depmix_core::simstudy::{Example, DEFAULT_TEST_SEED, DEFAULT_TEST_SIZE};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelFamily>,
    pub options: ModelOptions,
    pub mcmc: McmcConfig,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub test: Option<TestSpec>,
}

/// Where prediction covariates come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum TestSpec {
    Example {
        example: Example,
        #[serde(default = "default_test_size")]
        size: usize,
        #[serde(default = "default_test_seed")]
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

fn default_test_size() -> usize {
    DEFAULT_TEST_SIZE
}

fn default_test_seed() -> u64 {
    DEFAULT_TEST_SEED
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text).map_err(|e| e.context(path.display()))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> CliResult<()> {
        self.mcmc.validate()?;
        let o = &self.options;
        if o.truncation == 0 {
            return Err(CliError::usage("options.truncation must be at least 1"));
        }
        if !(o.alpha > 0.0 && o.alpha.is_finite()) {
            return Err(CliError::usage("options.alpha must be positive"));
        }
        if !(o.joint_g > 0.0 && o.joint_g.is_finite()) {
            return Err(CliError::usage("options.joint_g must be positive"));
        }
        if o.spline_knots == 0 {
            return Err(CliError::usage("options.spline_knots must be at least 1"));
        }
        if let Some(TestSpec::Example { size: 0, .. }) = &self.test {
            return Err(CliError::usage("test.size must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = RunConfig::parse(
            r#"{"model": "lsbp-ns", "options": {"lsbp_prior": "P2"},
                "mcmc": {"iterations": 200, "burn_in": 100, "thin": 2, "seed": 9},
                "test": {"example": 3}}"#,
        )
        .unwrap();
        assert_eq!(cfg.model, Some(ModelFamily::LsbpNs));
        assert_eq!(cfg.mcmc.iterations, 200);
        assert_eq!(cfg.options.truncation, 20);
        let again = RunConfig::parse(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse(r#"{"modle": "nw"}"#).is_err());
        assert!(RunConfig::parse(r#"{"mcmc": {"iters": 5}}"#).is_err());
        assert!(RunConfig::parse(r#"{"options": {"J": 5}}"#).is_err());
        assert!(RunConfig::parse(r#"{"model": "edp"}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let e = RunConfig::parse(r#"{"mcmc": {"iterations": 10, "burn_in": 10}}"#).unwrap_err();
        assert_eq!(e.exit_code(), crate::error::EXIT_USAGE);
        assert!(RunConfig::parse(r#"{"options": {"alpha": 0}}"#).is_err());
    }
}
