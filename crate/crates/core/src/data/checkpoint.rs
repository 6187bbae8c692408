use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderHandle;
use crate::error::{Error, Result};
use crate::heads::{HeadConfig, HeadStack, Linear, Role};
use crate::training::AdamState;

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Trained head weights plus everything needed to verify and resume a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub encoder_id: String,
    pub encoder_digest: String,
    pub head: HeadStack,
    /// Fingerprint of the configuration that produced this checkpoint.
    pub config_fingerprint: String,
    pub seed: u64,
    pub epochs_done: usize,
    pub steps_done: usize,
    pub optimizer: Option<AdamState>,
    /// Digest of the frozen teacher a student was distilled from.
    pub teacher_digest: Option<String>,
    pub train_accuracy: Option<f64>,
}

impl Checkpoint {
    pub fn role(&self) -> Role {
        self.head.role()
    }

    /// Errors when this checkpoint was trained on a different encoder.
    /// With `allow_mismatch` the mismatch is only logged.
    pub fn check_encoder(&self, encoder: &EncoderHandle, allow_mismatch: bool) -> Result<()> {
        let checks = [
            ("encoder id", &self.encoder_id, encoder.id().to_string()),
            ("encoder weights", &self.encoder_digest, encoder.weights_digest()),
        ];
        for (what, stored, live) in checks {
            if *stored != live {
                if allow_mismatch {
                    log::warn!("{what} mismatch overridden: checkpoint {stored}, live {live}");
                    continue;
                }
                return Err(Error::Fingerprint {
                    what,
                    expected: stored.clone(),
                    found: live,
                });
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tensor {
    shape: Vec<usize>,
    /// Base64 of little-endian f64 values.
    data: String,
}

impl Tensor {
    fn encode(shape: &[usize], values: impl Iterator<Item = f64>) -> Self {
        let bytes: Vec<u8> = values.flat_map(f64::to_le_bytes).collect();
        Self {
            shape: shape.to_vec(),
            data: STANDARD.encode(bytes),
        }
    }

    fn decode(&self, path: &Path) -> Result<Vec<f64>> {
        let bad = |reason: String| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let bytes = STANDARD.decode(&self.data).map_err(|e| bad(e.to_string()))?;
        let n: usize = self.shape.iter().product();
        if bytes.len() != n * 8 {
            return Err(bad(format!("tensor {:?} has {} bytes", self.shape, bytes.len())));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    weight: Tensor,
    bias: Tensor,
}

impl LayerFile {
    fn encode(l: &Linear) -> Self {
        let (r, c) = l.weight.dim();
        Self {
            weight: Tensor::encode(&[r, c], l.weight.iter().copied()),
            bias: Tensor::encode(&[l.bias.len()], l.bias.iter().copied()),
        }
    }

    fn decode(&self, path: &Path) -> Result<Linear> {
        let bad = || Error::Checkpoint {
            path: path.to_path_buf(),
            reason: "malformed layer shape".into(),
        };
        let [r, c] = self.weight.shape[..] else { return Err(bad()) };
        let weight = Array2::from_shape_vec((r, c), self.weight.decode(path)?).map_err(|_| bad())?;
        let bias = Array1::from(self.bias.decode(path)?);
        Ok(Linear { weight, bias })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerFile {
    step: u64,
    m: Vec<LayerFile>,
    v: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: u32,
    role: Role,
    encoder_id: String,
    encoder_digest: String,
    config_fingerprint: String,
    head_config: HeadConfig,
    head_digest: String,
    layers: Vec<LayerFile>,
    seed: u64,
    epochs_done: usize,
    steps_done: usize,
    optimizer: Option<OptimizerFile>,
    teacher_digest: Option<String>,
    train_accuracy: Option<f64>,
}

pub fn checkpoint_to_string(ckpt: &Checkpoint) -> Result<String> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT,
        role: ckpt.role(),
        encoder_id: ckpt.encoder_id.clone(),
        encoder_digest: ckpt.encoder_digest.clone(),
        config_fingerprint: ckpt.config_fingerprint.clone(),
        head_config: ckpt.head.config().clone(),
        head_digest: ckpt.head.digest(),
        layers: ckpt.head.layers().iter().map(LayerFile::encode).collect(),
        seed: ckpt.seed,
        epochs_done: ckpt.epochs_done,
        steps_done: ckpt.steps_done,
        optimizer: ckpt.optimizer.as_ref().map(|s| OptimizerFile {
            step: s.step,
            m: s.m.iter().map(LayerFile::encode).collect(),
            v: s.v.iter().map(LayerFile::encode).collect(),
        }),
        teacher_digest: ckpt.teacher_digest.clone(),
        train_accuracy: ckpt.train_accuracy,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Atomic write of the JSON checkpoint.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    super::write_atomic(path.as_ref(), checkpoint_to_string(ckpt)?.as_bytes())
}

/// Loads a checkpoint and verifies its weights against the stored digest.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unsupported format {}", file.format)));
    }
    if file.head_config.role != file.role {
        return Err(bad("role does not match head config".into()));
    }
    let layers = file.layers.iter().map(|l| l.decode(path)).collect::<Result<Vec<_>>>()?;
    let head = HeadStack::from_layers(file.head_config, layers).map_err(|e| bad(e.to_string()))?;
    if head.digest() != file.head_digest {
        return Err(bad("weights do not match their digest".into()));
    }
    let optimizer = match file.optimizer {
        Some(o) => {
            let state = AdamState {
                step: o.step,
                m: o.m.iter().map(|l| l.decode(path)).collect::<Result<_>>()?,
                v: o.v.iter().map(|l| l.decode(path)).collect::<Result<_>>()?,
            };
            if !state.matches(&head) {
                return Err(bad("optimizer state does not match the head".into()));
            }
            Some(state)
        }
        None => None,
    };
    Ok(Checkpoint {
        encoder_id: file.encoder_id,
        encoder_digest: file.encoder_digest,
        head,
        config_fingerprint: file.config_fingerprint,
        seed: file.seed,
        epochs_done: file.epochs_done,
        steps_done: file.steps_done,
        optimizer,
        teacher_digest: file.teacher_digest,
        train_accuracy: file.train_accuracy,
    })
}
