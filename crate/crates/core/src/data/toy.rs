use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Sample};
use super::manifest::{write_manifest, ManifestEntry};
use crate::analysis::{spectrum_gap, DEFAULT_BINS, HIGH_BAND};
use crate::error::{Error, Result};
use crate::image::{Image, Plane};
use crate::label::Label;
use crate::rng;

/// Minimum fake-minus-real high-band log-energy a generated set must show.
pub const MIN_TOY_GAP: f64 = 0.3;
const OCTAVES: u32 = 5;
const TEXTURE_STD: f64 = 0.12;
const DETAIL_AMP: f64 = 0.06;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub n_per_class: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_per_class: 200,
            size: 72,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class < 10 {
            return Err(Error::invalid("n_per_class", format!("{} < 10", self.n_per_class)));
        }
        if self.size < 16 || !self.size.is_multiple_of(2) {
            return Err(Error::invalid("size", format!("{} must be even and >= 16", self.size)));
        }
        Ok(())
    }
}

fn catmull_rom(p: [f64; 4], t: f64) -> f64 {
    0.5 * (2.0 * p[1]
        + (p[2] - p[0]) * t
        + (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) * t * t
        + (3.0 * p[1] - p[0] - 3.0 * p[2] + p[3]) * t * t * t)
}

/// Gaussian noise on a grid of spacing `step`, bicubically upsampled.
fn smooth_noise<R: Rng + ?Sized>(size: usize, step: usize, rng: &mut R) -> Vec<f64> {
    let n = size / step + 4;
    let grid: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        let gy = y as f64 / step as f64;
        let (iy, ty) = (gy.floor() as usize, gy.fract());
        for x in 0..size {
            let gx = x as f64 / step as f64;
            let (ix, tx) = (gx.floor() as usize, gx.fract());
            let mut rows = [0.0; 4];
            for (j, r) in rows.iter_mut().enumerate() {
                let base = (iy + j) * n + ix;
                *r = catmull_rom([grid[base], grid[base + 1], grid[base + 2], grid[base + 3]], tx);
            }
            out[y * size + x] = catmull_rom(rows, ty);
        }
    }
    out
}

/// Multi-octave texture with per-channel tint and gain.
pub fn real_texture<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Image {
    let mut base = vec![0.0; size * size];
    for o in 1..=OCTAVES {
        let step = 1usize << o;
        let amp = step as f64 / 32.0;
        for (b, v) in base.iter_mut().zip(smooth_noise(size, step, rng)) {
            *b += amp * v;
        }
    }
    let n = base.len() as f64;
    let mean = base.iter().sum::<f64>() / n;
    let std = (base.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.3..0.7));
    let gain: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.8..1.2));
    let planes: Vec<Plane> = (0..3)
        .map(|c| {
            Plane::from_fn(size, size, |x, y| {
                let t = (base[y * size + x] - mean) / std * TEXTURE_STD;
                (tint[c] + gain[c] * t) as f32
            })
        })
        .collect();
    let mut img = Image::from_channels([&planes[0], &planes[1], &planes[2]]).expect("same dims");
    img.clamp01();
    img
}

/// Adds nearest-neighbour 2x upsampled Gaussian detail to every channel.
pub fn inject_upsampling_artifacts<R: Rng + ?Sized>(image: &Image, amp: f64, rng: &mut R) -> Image {
    let (w, h) = image.dims();
    let (hw, hh) = (w.div_ceil(2), h.div_ceil(2));
    let detail: Vec<[f32; 3]> = (0..hw * hh)
        .map(|_| std::array::from_fn(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (amp * z) as f32
        }))
        .collect();
    let mut out = Image::from_fn(w, h, |x, y| {
        let p = image.pixel(x, y);
        let d = detail[(y / 2) * hw + x / 2];
        [p[0] + d[0], p[1] + d[1], p[2] + d[2]]
    });
    out.clamp01();
    out
}

fn toy_image(cfg: &ToyConfig, label: Label, i: usize) -> Image {
    let mut r = rng::stream(cfg.seed, &[rng::tag("toy"), label.index() as u64, i as u64]);
    let tex = real_texture(cfg.size, &mut r);
    let mut img = match label {
        Label::Real => tex,
        Label::Fake => inject_upsampling_artifacts(&tex, DETAIL_AMP, &mut r),
    };
    img.quantize8();
    img
}

pub fn toy_id(label: Label, i: usize) -> String {
    format!("{label}-{i:04}")
}

/// In-memory toy dataset, real samples first.
pub fn toy_dataset(cfg: &ToyConfig) -> Result<Dataset> {
    cfg.validate()?;
    let jobs: Vec<(Label, usize)> = [Label::Real, Label::Fake]
        .into_iter()
        .flat_map(|l| (0..cfg.n_per_class).map(move |i| (l, i)))
        .collect();
    let samples = jobs
        .par_iter()
        .map(|&(l, i)| Sample::new(toy_id(l, i), l, toy_image(cfg, l, i)))
        .collect();
    Dataset::new(samples)
}

/// Fake-minus-real high-band gap of a dataset.
pub fn dataset_gap(ds: &Dataset) -> Result<f64> {
    let pick = |l: Label| -> Vec<Image> {
        ds.samples().iter().filter(|s| s.label == l).map(|s| s.image.clone()).collect()
    };
    spectrum_gap(&pick(Label::Real), &pick(Label::Fake), HIGH_BAND, DEFAULT_BINS)
}

/// Sidecar written next to a generated toy manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySummary {
    pub config: ToyConfig,
    /// Relative to the output directory.
    pub manifest: PathBuf,
    pub spectrum_gap: f64,
    pub dataset_digest: String,
}

/// Writes PNGs under `out_dir/images` plus `manifest.jsonl` and `toy.json`.
/// Fails if the generated set does not show the expected spectrum gap.
pub fn generate_toy_dataset(cfg: &ToyConfig, out_dir: impl AsRef<Path>) -> Result<ToySummary> {
    let out_dir = out_dir.as_ref();
    let ds = toy_dataset(cfg)?;
    let gap = dataset_gap(&ds)?;
    if gap <= MIN_TOY_GAP {
        return Err(Error::Dataset(format!(
            "toy spectrum gap {gap:.3} is not above {MIN_TOY_GAP}"
        )));
    }
    let img_dir = out_dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let entries: Vec<ManifestEntry> = ds
        .samples()
        .par_iter()
        .map(|s| {
            let rel = PathBuf::from("images").join(format!("{}.png", s.id));
            s.image.save_png(out_dir.join(&rel))?;
            let source = match s.label {
                Label::Real => "real",
                Label::Fake => "toy-nn-upsample",
            };
            Ok(ManifestEntry::new(s.id.clone(), rel, s.label, source))
        })
        .collect::<Result<_>>()?;
    let manifest = PathBuf::from("manifest.jsonl");
    write_manifest(out_dir.join(&manifest), &entries)?;
    let summary = ToySummary {
        config: cfg.clone(),
        manifest,
        spectrum_gap: gap,
        dataset_digest: ds.digest(),
    };
    super::write_atomic(&out_dir.join("toy.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        let cfg = ToyConfig {
            n_per_class: 10,
            size: 32,
            seed: 3,
        };
        let a = toy_dataset(&cfg).unwrap();
        let b = toy_dataset(&cfg).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.count(Label::Real), 10);
        assert_eq!(a.count(Label::Fake), 10);
        let c = toy_dataset(&ToyConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn fakes_carry_more_high_frequency_energy() {
        let cfg = ToyConfig {
            n_per_class: 12,
            size: 48,
            seed: 1,
        };
        let gap = dataset_gap(&toy_dataset(&cfg).unwrap()).unwrap();
        assert!(gap > MIN_TOY_GAP, "gap {gap}");
    }

    #[test]
    fn rejects_small_configs() {
        assert!(ToyConfig { n_per_class: 9, ..ToyConfig::default() }.validate().is_err());
        assert!(ToyConfig { size: 15, ..ToyConfig::default() }.validate().is_err());
    }
}
