use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, Image, Plane, CHANNELS};

/// ImageNet channel statistics.
pub const CHANNEL_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const CHANNEL_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    TrainRandomCrop,
    EvalCenterCrop,
}

/// Square resize followed by a square crop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSize {
    pub resize: usize,
    pub crop: usize,
}

impl Default for PreprocessSize {
    fn default() -> Self {
        Self {
            resize: 256,
            crop: 224,
        }
    }
}

impl PreprocessSize {
    pub fn validate(&self) -> Result<()> {
        if self.crop < 8 || self.resize < self.crop {
            return Err(Error::invalid(
                "preprocess",
                format!("need 8 <= crop ({}) <= resize ({})", self.crop, self.resize),
            ));
        }
        Ok(())
    }
}

/// Resize to `resize x resize`, then crop `crop x crop`: a uniformly random
/// offset in training, the central window in evaluation. Pixel domain in and
/// out; see [`normalize`] for the encoder boundary.
pub fn preprocess<R: Rng + ?Sized>(
    image: &Image,
    size: PreprocessSize,
    mode: CropMode,
    rng: &mut R,
) -> Result<Image> {
    Ok(preprocess_with_mask(image, None, size, mode, rng)?.0)
}

/// [`preprocess`] applied to an image and, with the same window, its mask.
/// The mask is resized bilinearly and re-thresholded at 0.5.
pub fn preprocess_with_mask<R: Rng + ?Sized>(
    image: &Image,
    mask: Option<&Plane>,
    size: PreprocessSize,
    mode: CropMode,
    rng: &mut R,
) -> Result<(Image, Option<Plane>)> {
    size.validate()?;
    if image.width() < 8 || image.height() < 8 {
        return Err(Error::invalid(
            "image",
            format!("{}x{} is smaller than 8 px", image.width(), image.height()),
        ));
    }
    if let Some(m) = mask {
        if m.dims() != image.dims() {
            return Err(Error::ShapeMismatch(format!("mask {:?} vs image {:?}", m.dims(), image.dims())));
        }
    }
    let slack = size.resize - size.crop;
    let (ox, oy) = match mode {
        CropMode::EvalCenterCrop => (slack / 2, slack / 2),
        CropMode::TrainRandomCrop if slack == 0 => (0, 0),
        CropMode::TrainRandomCrop => (rng.random_range(0..=slack), rng.random_range(0..=slack)),
    };
    let resized = resize_bilinear(image, size.resize, size.resize);
    let out = crop(&resized, ox, oy, size.crop, size.crop);
    let mask = mask.map(|m| {
        let as_img = Image::from_channels([m, m, m]).expect("same dims");
        let r = crop(&resize_bilinear(&as_img, size.resize, size.resize), ox, oy, size.crop, size.crop);
        let ch = r.channel(0);
        Plane::from_fn(size.crop, size.crop, |x, y| if ch.get(x, y) >= 0.5 { 1.0 } else { 0.0 })
    });
    Ok((out, mask))
}

pub fn crop(image: &Image, x0: usize, y0: usize, w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |x, y| image.pixel(x0 + x, y0 + y))
}

/// Channel-normalized image, the only input type the encoder accepts.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl NormalizedImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }
}

pub fn normalize(image: &Image) -> NormalizedImage {
    let data = image
        .as_slice()
        .chunks_exact(CHANNELS)
        .flat_map(|p| (0..CHANNELS).map(move |c| (p[c] - CHANNEL_MEAN[c]) / CHANNEL_STD[c]))
        .collect();
    NormalizedImage {
        width: image.width(),
        height: image.height(),
        data,
    }
}

/// Inverse of [`normalize`], without clamping.
pub fn denormalize(image: &NormalizedImage) -> Image {
    let data = image
        .data
        .chunks_exact(CHANNELS)
        .flat_map(|p| (0..CHANNELS).map(move |c| p[c] * CHANNEL_STD[c] + CHANNEL_MEAN[c]))
        .collect();
    Image::from_raw(image.width, image.height, data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn img(n: usize) -> Image {
        Image::from_fn(n, n, |x, y| [x as f32 / n as f32, y as f32 / n as f32, 0.25])
    }

    #[test]
    fn center_crop_at_target_size_is_identity() {
        let im = img(32);
        let size = PreprocessSize { resize: 32, crop: 32 };
        let out = preprocess(&im, size, CropMode::EvalCenterCrop, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(out, im);
    }

    #[test]
    fn random_crop_without_slack_is_deterministic() {
        let im = img(40);
        let size = PreprocessSize { resize: 24, crop: 24 };
        let a = preprocess(&im, size, CropMode::TrainRandomCrop, &mut rng::stream(1, &[])).unwrap();
        let b = preprocess(&im, size, CropMode::TrainRandomCrop, &mut rng::stream(2, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn normalize_round_trip() {
        let im = img(16);
        let back = denormalize(&normalize(&im));
        assert!(back.max_abs_diff(&im) < 1e-6);
    }

    #[test]
    fn rejects_degenerate_sizes() {
        let tiny = img(6);
        let size = PreprocessSize { resize: 16, crop: 8 };
        assert!(preprocess(&tiny, size, CropMode::EvalCenterCrop, &mut rng::stream(0, &[])).is_err());
        let bad = PreprocessSize { resize: 8, crop: 16 };
        assert!(preprocess(&img(16), bad, CropMode::EvalCenterCrop, &mut rng::stream(0, &[])).is_err());
    }
}
