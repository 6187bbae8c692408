//! Diagnostics: radial spectra, attention stability under blur, and
//! patch-token similarity.

mod attention;
pub mod plot;
mod spectrum;

pub use attention::{attention_similarity, cosine, patch_similarity_matrix, SimilarityCurve};
pub use spectrum::{mean_band_energy, mean_spectrum, radial_spectrum, spectrum_gap, RadialSpectrum, LOG_EPS};

/// Band used for the real/fake spectrum comparison.
pub const HIGH_BAND: (f64, f64) = (0.25, 0.5);
/// Default number of radial bins.
pub const DEFAULT_BINS: usize = 16;

/// Blurs image `i` of `n` with a straight-line motion PSF of `length`
/// pixels at angle `pi * i / n`.
pub fn line_blur_each(images: &[crate::image::Image], length: f64) -> crate::Result<Vec<crate::image::Image>> {
    use rayon::prelude::*;
    let n = images.len().max(1);
    let size = 2 * (length.ceil() as usize / 2) + 3;
    images
        .par_iter()
        .enumerate()
        .map(|(i, im)| {
            let angle = std::f64::consts::PI * i as f64 / n as f64;
            crate::blur::convolve(im, &crate::blur::motion_line(length, angle, size, length.max(1e-9))?)
        })
        .collect()
}
