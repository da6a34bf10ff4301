//! Experiment files: TOML with every table rejecting unknown keys.
//!
//! ```toml
//! name = "smoke"
//!
//! [paths]
//! out_dir = "runs/smoke"
//!
//! [train]
//! seed = 7
//! enc_steps = 10
//! dec_steps = 50
//! max_epochs = 20
//! schedule = [{ lr = 1e-3, batch = 256 }]
//!
//! [train.codec]
//! k = 16
//! list_size = 4
//! iterations = 2
//! variant = "ir-ae"
//! hidden_channels = 32
//! crc = "101010111"
//!
//! [eval]
//! mode = "ga"
//! snr_db = [0.0, 2.0, 4.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{EvalConfig, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Directory for checkpoints, logs and reports.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Checkpoint to evaluate; defaults to `best.ckpt` in the output directory.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Write one CSV row per evaluation selection.
    #[serde(default)]
    pub trial_log: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
    #[serde(default)]
    pub paths: Paths,
}

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "LISTAE_OUT_DIR";

impl ExperimentConfig {
    /// Any failure to read or parse is a configuration error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!(
                "experiment name {:?} must be a plain non-empty name",
                self.name
            )));
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        if let Some(e) = &self.eval {
            e.validate()?;
        }
        Ok(())
    }

    /// `--out-dir`, then `paths.out_dir`, then `$LISTAE_OUT_DIR/<name>`,
    /// then `runs/<name>`.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.paths.out_dir {
            return p.clone();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root).join(&self.name),
            _ => PathBuf::from("runs").join(&self.name),
        }
    }
}
