//! Run configuration file.
//!
//! ```json
//! {
//!   "frame": {
//!     "path": "frame.csv",
//!     "target_columns": ["POPTOT", "Surfacebois"],
//!     "aux_columns": [{"name": "POPTOT", "bins": 18}],
//!     "domain_column": "REG",
//!     "precision": [0.1]
//!   },
//!   "allocation": {"variance": "population"},
//!   "seeding": {"restarts": 10},
//!   "annealer": {"maxit": 10, "seq_len": 3000}
//! }
//! ```
//!
//! `frame.path` is resolved against the directory holding the config file.
//! Every section except `frame` may be omitted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strata_core::frame::{prepare, FrameSchema};
use strata_core::seeding::SeedingConfig;
use strata_core::{DomainProblem, EvalOptions, SaConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: FrameSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub frame: FrameConfig,
    #[serde(default)]
    pub allocation: EvalOptions,
    #[serde(default)]
    pub seeding: SeedingConfig,
    #[serde(default)]
    pub annealer: SaConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        if cfg.frame.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.frame.path = dir.join(&cfg.frame.path);
            }
        }
        cfg.frame.schema.validate().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads the frame and builds one problem per domain.
    pub fn problems(&self) -> Result<Vec<DomainProblem>, CliError> {
        prepare(&self.frame.path, &self.frame.schema).map_err(|e| CliError::Input(e.to_string()))
    }
}
