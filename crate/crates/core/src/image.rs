//! Pixel-domain RGB images and single-channel planes.
//!
//! Pixels are `f32` in `[0, 1]`, stored row-major, channel-interleaved.
//! Everything in [`crate::blur`] operates on this type; channel
//! normalization for the encoder produces a different type
//! ([`crate::data::NormalizedImage`]), so blur can never run on
//! normalized tensors.

use std::path::Path;

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Standard luma weights.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * CHANNELS + c] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Extracts one channel as a plane.
    pub fn channel(&self, c: usize) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(CHANNELS).copied().collect(),
        }
    }

    pub fn from_channels(planes: [&Plane; 3]) -> Result<Self> {
        let (w, h) = planes[0].dims();
        if planes.iter().any(|p| p.dims() != (w, h)) {
            return Err(Error::ShapeMismatch("channel planes differ in size".into()));
        }
        let mut data = Vec::with_capacity(w * h * CHANNELS);
        for i in 0..w * h {
            for p in planes {
                data.push(p.data[i]);
            }
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    pub fn luma(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self
                .data
                .chunks_exact(CHANNELS)
                .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
                .collect(),
        }
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn is_in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn max_abs_diff(&self, other: &Image) -> f32 {
        assert_eq!(self.dims(), other.dims(), "image size mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Rounds every value to the nearest 8-bit level.
    pub fn quantize8(&mut self) {
        for v in &mut self.data {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let buf = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory(&bytes)?.to_rgb8();
        Ok(Self::from_rgb8(&img))
    }

    /// Writes an 8-bit PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        self.to_rgb8().write_to(
            &mut std::io::Cursor::new(&mut bytes),
            image::ImageFormat::Png,
        )?;
        crate::data::write_atomic(path, &bytes)
    }
}

/// A single-channel `f32` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} plane",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Loads a grayscale mask; values above one half count as set.
    pub fn load_mask(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory(&bytes)?.to_luma8();
        Ok(Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img
                .as_raw()
                .iter()
                .map(|&v| if v >= 128 { 1.0 } else { 0.0 })
                .collect(),
        })
    }
}

/// Index into `[0, n)` with half-sample symmetric reflection
/// (`d c b a | a b c d | d c b a`), valid for any offset.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Bilinear sample with reflective boundary; `(x, y)` in pixel-center coordinates.
pub fn sample_bilinear(img: &Image, x: f32, y: f32) -> [f32; 3] {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (w, h) = img.dims();
    let xi = [reflect_index(x0 as isize, w), reflect_index(x0 as isize + 1, w)];
    let yi = [reflect_index(y0 as isize, h), reflect_index(y0 as isize + 1, h)];
    let mut out = [0.0f32; 3];
    for c in 0..CHANNELS {
        let top = img.get(xi[0], yi[0], c) * (1.0 - fx) + img.get(xi[1], yi[0], c) * fx;
        let bot = img.get(xi[0], yi[1], c) * (1.0 - fx) + img.get(xi[1], yi[1], c) * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    out
}

/// Bilinear resize with half-pixel-center alignment and no antialiasing.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Image {
    if img.dims() == (width, height) {
        return img.clone();
    }
    let sx = img.width() as f32 / width as f32;
    let sy = img.height() as f32 / height as f32;
    Image::from_fn(width, height, |x, y| {
        let src_x = (x as f32 + 0.5) * sx - 0.5;
        let src_y = (y as f32 + 0.5) * sy - 0.5;
        sample_bilinear(img, src_x, src_y)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_index_is_half_sample_symmetric() {
        let got: Vec<usize> = (-4..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-7, 1), 0);
        assert_eq!(reflect_index(11, 4), 3);
    }

    #[test]
    fn channel_round_trip() {
        let img = Image::from_fn(5, 3, |x, y| [x as f32 * 0.1, y as f32 * 0.2, 0.5]);
        let r = img.channel(0);
        let g = img.channel(1);
        let b = img.channel(2);
        assert_eq!(Image::from_channels([&r, &g, &b]).unwrap(), img);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = Image::from_fn(6, 4, |x, y| [(x + y) as f32 / 10.0, 0.3, 0.7]);
        assert_eq!(resize_bilinear(&img, 6, 4), img);
        let flat = Image::filled(9, 7, [0.25, 0.5, 0.75]);
        let small = resize_bilinear(&flat, 4, 3);
        assert!(small.as_slice().chunks(3).all(|p| (p[0] - 0.25).abs() < 1e-6
            && (p[1] - 0.5).abs() < 1e-6
            && (p[2] - 0.75).abs() < 1e-6));
    }
}
