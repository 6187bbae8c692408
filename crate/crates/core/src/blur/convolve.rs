use super::kernel::{BlurKernel, MASS_TOLERANCE};
use crate::error::{Error, Result};
use crate::image::{reflect_index, Image, Plane, CHANNELS};

/// Per-channel 2D convolution with half-sample reflective boundaries.
/// Output is clamped to `[0, 1]`.
pub fn convolve(image: &Image, kernel: &BlurKernel) -> Result<Image> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::ShapeMismatch("empty image".into()));
    }
    if (kernel.mass() - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::invalid("kernel", "must have unit mass"));
    }
    debug_assert!(image.is_in_unit_range(), "blur runs on [0, 1] pixels");
    if kernel.is_delta() {
        return Ok(image.clone());
    }

    let (w, h) = image.dims();
    let r = kernel.radius();
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    let src = image.as_slice();
    let mut padded = vec![0.0f32; pw * ph * CHANNELS];
    for py in 0..ph {
        let sy = reflect_index(py as isize - r as isize, h);
        for px in 0..pw {
            let sx = reflect_index(px as isize - r as isize, w);
            let s = (sy * w + sx) * CHANNELS;
            let d = (py * pw + px) * CHANNELS;
            padded[d..d + CHANNELS].copy_from_slice(&src[s..s + CHANNELS]);
        }
    }

    // out(x, y) = sum k(dx, dy) * in(x - dx, y - dy)
    let taps = kernel.taps();
    let mut out = vec![0.0f32; w * h * CHANNELS];
    let mut acc = vec![0.0f64; w * CHANNELS];
    for y in 0..h {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for &(dx, dy, wt) in &taps {
            let py = (y as isize + r as isize - dy) as usize;
            let px0 = (r as isize - dx) as usize;
            let row = &padded[(py * pw + px0) * CHANNELS..(py * pw + px0 + w) * CHANNELS];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += wt * v as f64;
            }
        }
        for (o, a) in out[y * w * CHANNELS..(y + 1) * w * CHANNELS].iter_mut().zip(&acc) {
            *o = (*a as f32).clamp(0.0, 1.0);
        }
    }
    Image::from_raw(w, h, out)
}

/// Single-plane convolution, same boundary rule, no clamping.
pub fn convolve_plane(plane: &Plane, kernel: &BlurKernel) -> Plane {
    let (w, h) = plane.dims();
    let taps = kernel.taps();
    Plane::from_fn(w, h, |x, y| {
        let mut acc = 0.0f64;
        for &(dx, dy, wt) in &taps {
            let sx = reflect_index(x as isize - dx, w);
            let sy = reflect_index(y as isize - dy, h);
            acc += wt * plane.get(sx, sy) as f64;
        }
        acc as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blur::kernel::{parametric_kernel, KernelFamily};

    #[test]
    fn identity_kernel_is_noop() {
        let img = Image::from_fn(9, 5, |x, y| [x as f32 / 9.0, y as f32 / 5.0, 0.2]);
        assert_eq!(convolve(&img, &BlurKernel::identity()).unwrap(), img);
    }

    #[test]
    fn constant_image_is_preserved() {
        let img = Image::filled(12, 10, [0.3, 0.6, 0.9]);
        let k = parametric_kernel(KernelFamily::Bokeh, 3.0, 9).unwrap();
        let out = convolve(&img, &k).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn kernel_larger_than_image_still_reflects() {
        let img = Image::from_fn(3, 2, |x, _| [x as f32 / 3.0, 0.5, 0.5]);
        let k = parametric_kernel(KernelFamily::Box, 7.0, 7).unwrap();
        let out = convolve(&img, &k).unwrap();
        assert!(out.is_in_unit_range());
        assert!((out.mean() - img.mean()).abs() < 1e-6);
    }
}
