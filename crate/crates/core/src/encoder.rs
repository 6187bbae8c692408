//! Frozen patch encoders.
//!
//! The heads only see an [`Encoder`]: a pooled feature of width `d`, a grid
//! of patch tokens, and the class-token attention over patches. The
//! bundled [`ToyVit`] is a one-block vision transformer whose stem is a
//! fixed derivative filter bank and whose weights are drawn from a fixed
//! seed, so an encoder id fully determines its weights.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::NormalizedImage;
use crate::error::{Error, Result};
use crate::image::{reflect_index, Plane};
use crate::rng;

/// Output of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// Pooled feature, length `d`.
    pub pooled: Array1<f64>,
    /// `P x d` patch tokens in row-major grid order.
    pub patch_tokens: Array2<f64>,
    /// `rows x cols` class-token attention over patches, averaged over heads,
    /// summing to 1.
    pub attention: Array2<f64>,
}

pub trait Encoder: Send + Sync {
    fn id(&self) -> &str;
    fn embed_dim(&self) -> usize;
    /// Side length of the square input the encoder expects.
    fn input_size(&self) -> usize;
    fn patch_grid(&self) -> (usize, usize);
    fn encode(&self, image: &NormalizedImage) -> Result<EncoderOutput>;
    /// Hex SHA-256 over all weights.
    fn weights_digest(&self) -> String;
}

/// Shared, frozen encoder.
#[derive(Clone)]
pub struct EncoderHandle {
    inner: Arc<dyn Encoder>,
}

impl std::fmt::Debug for EncoderHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EncoderHandle").field("id", &self.inner.id()).finish()
    }
}

impl EncoderHandle {
    pub fn new(encoder: impl Encoder + 'static) -> Self {
        Self {
            inner: Arc::new(encoder),
        }
    }

    /// Rebuilds an encoder from its id.
    pub fn from_id(id: &str) -> Result<Self> {
        Ok(Self::new(ToyVit::new(ToyVitConfig::parse_id(id)?)?))
    }

    /// Encoders are never trained here.
    pub fn frozen(&self) -> bool {
        true
    }

    pub fn id(&self) -> &str {
        self.inner.id()
    }

    pub fn embed_dim(&self) -> usize {
        self.inner.embed_dim()
    }

    pub fn input_size(&self) -> usize {
        self.inner.input_size()
    }

    pub fn patch_grid(&self) -> (usize, usize) {
        self.inner.patch_grid()
    }

    pub fn encode(&self, image: &NormalizedImage) -> Result<EncoderOutput> {
        self.inner.encode(image)
    }

    pub fn weights_digest(&self) -> String {
        self.inner.weights_digest()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyVitConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub seed: u64,
}

impl Default for ToyVitConfig {
    fn default() -> Self {
        Self {
            image_size: 224,
            patch_size: 16,
            embed_dim: 64,
            heads: 4,
            seed: 0,
        }
    }
}

impl ToyVitConfig {
    pub fn id(&self) -> String {
        format!(
            "toyvit-v2-i{}-p{}-d{}-h{}-s{}",
            self.image_size, self.patch_size, self.embed_dim, self.heads, self.seed
        )
    }

    pub fn parse_id(id: &str) -> Result<Self> {
        let unknown = || Error::Unknown {
            kind: "encoder id",
            name: id.to_string(),
        };
        let rest = id.strip_prefix("toyvit-v2-").ok_or_else(unknown)?;
        let mut cfg = ToyVitConfig::default();
        let parts: Vec<&str> = rest.split('-').collect();
        if parts.len() != 5 {
            return Err(unknown());
        }
        for part in parts {
            let (key, val) = part.split_at(1);
            let num: u64 = val.parse().map_err(|_| unknown())?;
            match key {
                "i" => cfg.image_size = num as usize,
                "p" => cfg.patch_size = num as usize,
                "d" => cfg.embed_dim = num as usize,
                "h" => cfg.heads = num as usize,
                "s" => cfg.seed = num,
                _ => return Err(unknown()),
            }
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> (usize, usize) {
        let n = self.image_size / self.patch_size;
        (n, n)
    }

    fn validate(&self) -> Result<()> {
        if self.patch_size < 2 || !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::invalid(
                "patch_size",
                format!("{} must divide image size {}", self.patch_size, self.image_size),
            ));
        }
        if self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::invalid("heads", "must divide embed_dim"));
        }
        if self.embed_dim < STEM_FEATURES {
            return Err(Error::invalid(
                "embed_dim",
                format!("must be at least {STEM_FEATURES}"),
            ));
        }
        Ok(())
    }
}

/// Responses per opponent channel: four first differences, two stride-2
/// differences, a Laplacian, and the raw channel.
const RESPONSES: usize = 8;
/// Scaled RMS responses for three channels plus the three patch means.
pub const STEM_FEATURES: usize = 3 * RESPONSES + 3;
const ENERGY_EPS: f64 = 1e-6;
const RMS_GAIN: f64 = 4.0;
const POS_SCALE: f64 = 0.1;
const MLP_RATIO: usize = 2;

/// One-block ViT over a fixed derivative filter-bank stem.
pub struct ToyVit {
    cfg: ToyVitConfig,
    id: String,
    embed: Array2<f64>,
    pos: Array2<f64>,
    cls: Array1<f64>,
    wq: Array2<f64>,
    wk: Array2<f64>,
    wv: Array2<f64>,
    wo: Array2<f64>,
    w1: Array2<f64>,
    w2: Array2<f64>,
    digest: String,
}

impl ToyVit {
    pub fn new(cfg: ToyVitConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let (rows, cols) = cfg.grid();
        let mut r = rng::stream(cfg.seed, &[rng::tag("toyvit-v2")]);
        let mut gauss = |n_out: usize, n_in: usize, fan: usize| {
            let dist = Normal::new(0.0, 1.0 / (fan as f64).sqrt()).unwrap();
            Array2::from_shape_fn((n_out, n_in), |_| dist.sample(&mut r))
        };
        let embed = gauss(d, STEM_FEATURES, STEM_FEATURES);
        let cls = gauss(1, d, 1).row(0).to_owned();
        let wq = gauss(d, d, d);
        let wk = gauss(d, d, d);
        let wv = gauss(d, d, d);
        let wo = gauss(d, d, d);
        let w1 = gauss(MLP_RATIO * d, d, d);
        let w2 = gauss(d, MLP_RATIO * d, MLP_RATIO * d);
        let pos = sincos_positions(rows, cols, d);

        let mut hasher = Sha256::new();
        for m in [&embed, &pos, &wq, &wk, &wv, &wo, &w1, &w2] {
            for v in m.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        for v in cls.iter() {
            hasher.update(v.to_le_bytes());
        }
        let digest = hex::encode(hasher.finalize());
        Ok(Self {
            id: cfg.id(),
            cfg,
            embed,
            pos,
            cls,
            wq,
            wk,
            wv,
            wo,
            w1,
            w2,
            digest,
        })
    }

    pub fn config(&self) -> &ToyVitConfig {
        &self.cfg
    }

    /// Per-patch stem features, `P x STEM_FEATURES`.
    pub fn stem(&self, image: &NormalizedImage) -> Array2<f64> {
        let (w, h) = (image.width(), image.height());
        let p = self.cfg.patch_size;
        let (rows, cols) = (h / p, w / p);
        let opponent = opponent_planes(image);
        let mut feats = Array2::zeros((rows * cols, STEM_FEATURES));
        for (ci, plane) in opponent.iter().enumerate() {
            let responses = filter_bank(plane);
            for (ri, resp) in responses.iter().enumerate() {
                for (pi, e) in patch_mean_sq(resp, p, rows, cols).into_iter().enumerate() {
                    feats[[pi, ci * RESPONSES + ri]] = RMS_GAIN * (e + ENERGY_EPS).sqrt();
                }
            }
            let means = patch_mean(plane, p, rows, cols);
            for (pi, m) in means.into_iter().enumerate() {
                feats[[pi, 3 * RESPONSES + ci]] = m;
            }
        }
        feats
    }
}

impl Encoder for ToyVit {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed_dim(&self) -> usize {
        self.cfg.embed_dim
    }

    fn input_size(&self) -> usize {
        self.cfg.image_size
    }

    fn patch_grid(&self) -> (usize, usize) {
        self.cfg.grid()
    }

    fn weights_digest(&self) -> String {
        self.digest.clone()
    }

    fn encode(&self, image: &NormalizedImage) -> Result<EncoderOutput> {
        let s = self.cfg.image_size;
        if image.width() != s || image.height() != s {
            return Err(Error::ShapeMismatch(format!(
                "encoder {} expects {s}x{s}, got {}x{}",
                self.id,
                image.width(),
                image.height()
            )));
        }
        let d = self.cfg.embed_dim;
        let (rows, cols) = self.cfg.grid();
        let n_patch = rows * cols;

        let stem = self.stem(image);
        let mut x = Array2::<f64>::zeros((n_patch + 1, d));
        x.row_mut(0).assign(&self.cls);
        x.slice_mut(s![1.., ..])
            .assign(&(stem.dot(&self.embed.t()) + &self.pos));

        // attention
        let normed = layer_norm(&x);
        let q = normed.dot(&self.wq.t());
        let k = normed.dot(&self.wk.t());
        let v = normed.dot(&self.wv.t());
        let heads = self.cfg.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut mixed = Array2::<f64>::zeros((n_patch + 1, d));
        let mut cls_attn = Array1::<f64>::zeros(n_patch);
        for hd in 0..heads {
            let cols_h = s![.., hd * dh..(hd + 1) * dh];
            let qh = q.slice(cols_h);
            let kh = k.slice(cols_h);
            let vh = v.slice(cols_h);
            let mut logits = qh.dot(&kh.t()) * scale;
            for mut row in logits.rows_mut() {
                softmax_in_place(row.as_slice_mut().expect("contiguous"));
            }
            cls_attn += &logits.slice(s![0, 1..]);
            mixed.slice_mut(cols_h).assign(&logits.dot(&vh));
        }
        let x = x + mixed.dot(&self.wo.t());

        // mlp
        let hidden = layer_norm(&x).dot(&self.w1.t()).mapv(gelu);
        let x = &x + &hidden.dot(&self.w2.t());

        let patch_tokens = x.slice(s![1.., ..]).to_owned();
        let pooled = patch_tokens.mean_axis(Axis(0)).expect("non-empty grid");
        let total = cls_attn.sum();
        let attention = (cls_attn / total)
            .into_shape_with_order((rows, cols))
            .expect("grid shape");
        Ok(EncoderOutput {
            pooled,
            patch_tokens,
            attention,
        })
    }
}

fn opponent_planes(image: &NormalizedImage) -> [Plane; 3] {
    let (w, h) = (image.width(), image.height());
    let luma = Plane::from_fn(w, h, |x, y| {
        0.299 * image.get(x, y, 0) + 0.587 * image.get(x, y, 1) + 0.114 * image.get(x, y, 2)
    });
    let rg = Plane::from_fn(w, h, |x, y| image.get(x, y, 0) - image.get(x, y, 1));
    let yb = Plane::from_fn(w, h, |x, y| {
        0.5 * (image.get(x, y, 0) + image.get(x, y, 1)) - image.get(x, y, 2)
    });
    [luma, rg, yb]
}

fn filter_bank(p: &Plane) -> [Plane; RESPONSES] {
    let (w, h) = p.dims();
    let at = |x: usize, y: usize, dx: isize, dy: isize| {
        p.get(
            reflect_index(x as isize + dx, w),
            reflect_index(y as isize + dy, h),
        )
    };
    let diff = |dx: isize, dy: isize| Plane::from_fn(w, h, |x, y| at(x, y, dx, dy) - at(x, y, 0, 0));
    [
        diff(1, 0),
        diff(0, 1),
        diff(1, 1),
        diff(-1, 1),
        diff(2, 0),
        diff(0, 2),
        Plane::from_fn(w, h, |x, y| {
            4.0 * at(x, y, 0, 0) - at(x, y, -1, 0) - at(x, y, 1, 0) - at(x, y, 0, -1) - at(x, y, 0, 1)
        }),
        p.clone(),
    ]
}

fn patch_mean_sq(p: &Plane, patch: usize, rows: usize, cols: usize) -> Vec<f64> {
    patch_reduce(p, patch, rows, cols, |v| v * v)
}

fn patch_mean(p: &Plane, patch: usize, rows: usize, cols: usize) -> Vec<f64> {
    patch_reduce(p, patch, rows, cols, |v| v)
}

fn patch_reduce(p: &Plane, patch: usize, rows: usize, cols: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for y in r * patch..(r + 1) * patch {
                for x in c * patch..(c + 1) * patch {
                    acc += f(p.get(x, y) as f64);
                }
            }
            out[r * cols + c] = acc / (patch * patch) as f64;
        }
    }
    out
}

fn sincos_positions(rows: usize, cols: usize, d: usize) -> Array2<f64> {
    let quarter = (d / 4).max(1);
    Array2::from_shape_fn((rows * cols, d), |(p, j)| {
        let (r, c) = ((p / cols) as f64, (p % cols) as f64);
        let band = (j % quarter) as f64;
        let freq = 1.0 / 100f64.powf(band / quarter as f64);
        let v = match (j / quarter) % 4 {
            0 => (r * freq).sin(),
            1 => (r * freq).cos(),
            2 => (c * freq).sin(),
            _ => (c * freq).cos(),
        };
        POS_SCALE * v
    })
}

fn layer_norm(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + 1e-6).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
    out
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (0.797_884_560_802_865_4 * (x + 0.044715 * x * x * x)).tanh())
}

/// Derivative of [`gelu`].
pub fn gelu_grad(x: f64) -> f64 {
    let c = 0.797_884_560_802_865_4;
    let inner = c * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x)
}
