use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::manifest::Manifest;
use crate::error::{Error, Result};
use crate::image::{Image, Plane};
use crate::label::Label;

/// A decoded manifest entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: Label,
    pub image: Image,
    pub mask: Option<Plane>,
    pub severity_b: Option<f64>,
}

impl Sample {
    pub fn new(id: impl Into<String>, label: Label, image: Image) -> Self {
        Self {
            id: id.into(),
            label,
            image,
            mask: None,
            severity_b: None,
        }
    }
}

/// Decoded samples in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut ids = std::collections::HashSet::new();
        for s in &samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Dataset(format!("duplicate sample id `{}`", s.id)));
            }
            if let Some(m) = &s.mask {
                if m.dims() != s.image.dims() {
                    return Err(Error::Dataset(format!("mask of `{}` does not match its image", s.id)));
                }
            }
        }
        Ok(Self { samples })
    }

    /// Decodes every image (and mask) in parallel.
    pub fn load(manifest: &Manifest) -> Result<Self> {
        let samples = manifest
            .entries
            .par_iter()
            .map(|e| {
                let image = Image::load(&e.path)?;
                let mask = e.mask_path.as_ref().map(Plane::load_mask).transpose()?;
                Ok(Sample {
                    id: e.id.clone(),
                    label: e.label,
                    image,
                    mask,
                    severity_b: e.severity_b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// Errors unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Dataset("empty dataset".into()));
        }
        for l in [Label::Real, Label::Fake] {
            if self.count(l) == 0 {
                return Err(Error::Dataset(format!("no `{l}` samples; training needs both classes")));
            }
        }
        Ok(())
    }

    pub fn with_flipped_labels(&self) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                label: s.label.flipped(),
                ..s.clone()
            })
            .collect();
        Self { samples }
    }

    /// Hex SHA-256 over ids, labels and pixels.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.samples {
            h.update(s.id.as_bytes());
            h.update([0, s.label.index() as u8]);
            h.update((s.image.width() as u64).to_le_bytes());
            for v in s.image.as_slice() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
