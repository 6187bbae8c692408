use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::toy::ToyConfig;
use crate::blur::KernelFamily;
use crate::encoder::ToyVitConfig;
use crate::error::{Error, Result};
use crate::evaluation::{EvalSettings, SweepRow};
use crate::heads::Role;
use crate::training::PhaseConfig;

/// Hex SHA-256 of the canonical JSON form of `value` (object keys sorted).
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let canonical = serde_json::to_string(&serde_json::to_value(value)?)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(flatten)]
    pub settings: EvalSettings,
    pub sweep: Vec<SweepRow>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            settings: EvalSettings::default(),
            sweep: vec![SweepRow {
                family: KernelFamily::MotionPsf,
                params: vec![5.0, 10.0, 15.0],
            }],
        }
    }
}

/// Everything a pipeline run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub encoder: ToyVitConfig,
    pub teacher: PhaseConfig,
    pub student: PhaseConfig,
    pub eval: EvalConfig,
    pub toy: ToyConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            encoder: ToyVitConfig::default(),
            teacher: PhaseConfig::teacher(),
            student: PhaseConfig::student(),
            eval: EvalConfig::default(),
            toy: ToyConfig::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.teacher.validate(Role::Teacher)?;
        self.student.validate(Role::Student)?;
        self.eval.settings.preprocess.validate()?;
        for size in [self.teacher.preprocess, self.student.preprocess, self.eval.settings.preprocess] {
            if size.crop != self.encoder.image_size {
                return Err(Error::Config(format!(
                    "crop {} does not match encoder image_size {}",
                    size.crop, self.encoder.image_size
                )));
            }
        }
        Ok(())
    }

    /// Fingerprint of the run, independent of where outputs go.
    pub fn fingerprint(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        fingerprint(&c)
    }
}
