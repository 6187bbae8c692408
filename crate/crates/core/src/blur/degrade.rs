//! Co-degradations: radial blur, JPEG, sensor noise, down-up resampling.

use image::codecs::jpeg::JpegEncoder;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, sample_bilinear, Image};

/// Number of rotated copies averaged by [`radial_blur`].
pub const RADIAL_COPIES: usize = 8;

/// Rotational blur: mean of [`RADIAL_COPIES`] copies rotated about the image
/// center by angles evenly spaced over `[-strength, +strength]` degrees.
pub fn radial_blur(image: &Image, strength: f64) -> Result<Image> {
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(Error::invalid("strength", format!("{strength} must be >= 0")));
    }
    if strength == 0.0 {
        return Ok(image.clone());
    }
    let (w, h) = image.dims();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let rotations: Vec<(f64, f64)> = (0..RADIAL_COPIES)
        .map(|n| {
            let t = -strength + 2.0 * strength * n as f64 / (RADIAL_COPIES - 1) as f64;
            t.to_radians().sin_cos()
        })
        .collect();
    let scale = 1.0 / RADIAL_COPIES as f32;
    let mut out = Image::from_fn(w, h, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let mut acc = [0.0f32; 3];
        for &(s, c) in &rotations {
            // inverse map: rotate the output coordinate by -theta
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            let v = sample_bilinear(image, sx as f32, sy as f32);
            for k in 0..3 {
                acc[k] += v[k];
            }
        }
        acc.map(|v| v * scale)
    });
    out.clamp01();
    Ok(out)
}

/// Encode/decode round trip through baseline JPEG at `quality` (1..=100).
pub fn jpeg_degrade(image: &Image, quality: u8) -> Result<Image> {
    if !(1..=100).contains(&quality) {
        return Err(Error::invalid("quality", format!("{quality} outside [1, 100]")));
    }
    let rgb = image.to_rgb8();
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality).encode_image(&rgb)?;
    let decoded = image::load_from_memory_with_format(&buf, image::ImageFormat::Jpeg)?.to_rgb8();
    Ok(Image::from_rgb8(&decoded))
}

/// Adds i.i.d. zero-mean Gaussian noise of std `sigma`, then clamps.
pub fn add_sensor_noise<R: Rng + ?Sized>(image: &Image, sigma: f64, rng: &mut R) -> Result<Image> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", format!("{sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let noise = Normal::new(0.0, sigma).expect("validated sigma");
    let mut out = image.clone();
    for v in out.as_mut_slice() {
        *v = (*v as f64 + noise.sample(rng)).clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

/// Bilinear downsample to `floor(scale * size)` then back up.
pub fn down_up_sample(image: &Image, scale: f64) -> Result<Image> {
    if !(scale > 0.0 && scale < 1.0) {
        return Err(Error::invalid("scale", format!("{scale} outside (0, 1)")));
    }
    let (w, h) = image.dims();
    let sw = ((w as f64 * scale).floor() as usize).max(1);
    let sh = ((h as f64 * scale).floor() as usize).max(1);
    let small = resize_bilinear(image, sw, sh);
    Ok(resize_bilinear(&small, w, h))
}
