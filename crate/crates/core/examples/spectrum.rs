//! High-band spectrum gap between fake and real toy images, sharp and
//! after straight-line motion blur.
//!
//! ```text
//! cargo run --release --example spectrum
//! ```

use sharpblur::analysis::{line_blur_each, spectrum_gap, DEFAULT_BINS, HIGH_BAND};
use sharpblur::data::{toy_dataset, ToyConfig};
use sharpblur::image::Image;
use sharpblur::Label;

pub struct GapResult {
    pub sharp: f64,
    pub blurred: f64,
}

impl GapResult {
    /// Fraction of the absolute gap removed by the blur.
    pub fn shrink(&self) -> f64 {
        1.0 - self.blurred.abs() / self.sharp.abs()
    }
}

pub fn run_example(n_per_class: usize, blur_length: f64) -> sharpblur::Result<GapResult> {
    let ds = toy_dataset(&ToyConfig { n_per_class, size: 72, seed: 0 })?;
    let split = |l: Label| -> Vec<Image> { ds.samples().iter().filter(|s| s.label == l).map(|s| s.image.clone()).collect() };
    let (real, fake) = (split(Label::Real), split(Label::Fake));
    Ok(GapResult {
        sharp: spectrum_gap(&real, &fake, HIGH_BAND, DEFAULT_BINS)?,
        blurred: spectrum_gap(&line_blur_each(&real, blur_length)?, &line_blur_each(&fake, blur_length)?, HIGH_BAND, DEFAULT_BINS)?,
    })
}

fn main() -> sharpblur::Result<()> {
    let r = run_example(200, 15.0)?;
    println!("gap sharp {:.3}  blurred {:.3}  shrink {:.1}%", r.sharp, r.blurred, 100.0 * r.shrink());
    Ok(())
}
