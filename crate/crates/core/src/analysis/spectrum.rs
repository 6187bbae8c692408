use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Floor added to the annulus power before taking `log10`.
pub const LOG_EPS: f64 = 1e-12;

/// Log-power averaged over annuli of normalized spatial frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialSpectrum {
    /// Bin centers in cycles per pixel, within `[0, 0.5]`.
    pub bin_centers: Vec<f64>,
    /// `log10(mean power + LOG_EPS)` per bin.
    pub energy: Vec<f64>,
    /// Frequency samples that fell in each bin; empty bins sit at the floor.
    pub counts: Vec<usize>,
}

impl RadialSpectrum {
    /// Mean energy over non-empty bins whose centers lie in `[lo, hi]`.
    pub fn band_mean(&self, (lo, hi): (f64, f64)) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0;
        for ((&c, &e), &k) in self.bin_centers.iter().zip(&self.energy).zip(&self.counts) {
            if c >= lo && c <= hi && k > 0 {
                sum += e;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// Power spectrum of the mean-subtracted luma, normalized by pixel count,
/// binned radially over `[0, 0.5]`. The DC sample and the corners beyond
/// 0.5 are excluded.
pub fn radial_spectrum(image: &Image, n_bins: usize) -> Result<RadialSpectrum> {
    let (w, h) = image.dims();
    if w < 8 || h < 8 {
        return Err(Error::invalid("image", format!("{w}x{h} is smaller than 8 px")));
    }
    if n_bins < 4 {
        return Err(Error::invalid("n_bins", format!("{n_bins} < 4")));
    }
    let luma = image.luma();
    let mean = luma.mean();
    let mut buf: Vec<Complex<f64>> = luma
        .as_slice()
        .iter()
        .map(|&v| Complex::new(v as f64 - mean, 0.0))
        .collect();

    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(h);
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }

    let signed = |k: usize, n: usize| {
        let (k, n) = (k as f64, n as f64);
        let folded = if k >= n / 2.0 { k - n } else { k };
        folded / n
    };
    let norm = (w * h) as f64;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for y in 0..h {
        let fy = signed(y, h);
        for x in 0..w {
            if x == 0 && y == 0 {
                continue;
            }
            let fx = signed(x, w);
            let r = (fx * fx + fy * fy).sqrt();
            if r > 0.5 {
                continue;
            }
            let b = ((r / 0.5 * n_bins as f64) as usize).min(n_bins - 1);
            sums[b] += buf[y * w + x].norm_sqr() / norm;
            counts[b] += 1;
        }
    }
    let energy = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (if c > 0 { s / c as f64 } else { 0.0 } + LOG_EPS).log10())
        .collect();
    let bin_centers = (0..n_bins).map(|b| (b as f64 + 0.5) * 0.5 / n_bins as f64).collect();
    Ok(RadialSpectrum {
        bin_centers,
        energy,
        counts,
    })
}

/// Mean in-band log-energy of `fake` minus that of `real`.
pub fn spectrum_gap(real: &[Image], fake: &[Image], band: (f64, f64), n_bins: usize) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::invalid("images", "both sets must be non-empty"));
    }
    let (lo, hi) = band;
    if !(0.0 <= lo && lo < hi && hi <= 0.5) {
        return Err(Error::invalid("band", format!("need 0 <= lo < hi <= 0.5, got ({lo}, {hi})")));
    }
    Ok(mean_band_energy(fake, band, n_bins)? - mean_band_energy(real, band, n_bins)?)
}

pub fn mean_band_energy(images: &[Image], band: (f64, f64), n_bins: usize) -> Result<f64> {
    let mut total = 0.0;
    for img in images {
        total += radial_spectrum(img, n_bins)?
            .band_mean(band)
            .ok_or_else(|| Error::invalid("band", "contains no frequency samples"))?;
    }
    Ok(total / images.len() as f64)
}

/// Bin-wise mean of several spectra with matching bins.
pub fn mean_spectrum(spectra: &[RadialSpectrum]) -> Option<RadialSpectrum> {
    let first = spectra.first()?;
    let n = spectra.len() as f64;
    let mut energy = vec![0.0; first.energy.len()];
    let mut counts = vec![0; first.counts.len()];
    for s in spectra {
        for (acc, e) in energy.iter_mut().zip(&s.energy) {
            *acc += e / n;
        }
        for (acc, c) in counts.iter_mut().zip(&s.counts) {
            *acc += c;
        }
    }
    Some(RadialSpectrum {
        bin_centers: first.bin_centers.clone(),
        energy,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_sits_on_floor() {
        let s = radial_spectrum(&Image::filled(16, 16, [0.3, 0.6, 0.1]), 8).unwrap();
        assert!(s.energy.iter().all(|&e| (e - LOG_EPS.log10()).abs() < 1e-9));
    }

    #[test]
    fn bins_are_increasing_and_bounded() {
        let img = Image::from_fn(20, 12, |x, y| [((x * 7 + y * 3) % 5) as f32 / 5.0; 3]);
        let s = radial_spectrum(&img, 6).unwrap();
        assert!(s.bin_centers.windows(2).all(|w| w[0] < w[1]));
        assert!(s.bin_centers.iter().all(|&c| (0.0..=0.5).contains(&c)));
        assert_eq!(s.energy.len(), 6);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(radial_spectrum(&Image::new(7, 16), 8).is_err());
        assert!(radial_spectrum(&Image::new(16, 16), 3).is_err());
        let a = [Image::new(16, 16)];
        assert!(spectrum_gap(&[], &a, (0.25, 0.5), 8).is_err());
        assert!(spectrum_gap(&a, &a, (0.3, 0.2), 8).is_err());
    }
}
