//! Attention stability of the frozen encoder under growing motion blur, and
//! how blur makes patch tokens alike.
//!
//! ```text
//! cargo run --release --example attention
//! ```

use sharpblur::analysis::{attention_similarity, line_blur_each, patch_similarity_matrix, SimilarityCurve};
use sharpblur::data::{toy_dataset, ToyConfig};
use sharpblur::encoder::{EncoderHandle, ToyVitConfig};
use sharpblur::image::Image;

pub const KERNEL_SIZES: [usize; 5] = [1, 5, 9, 13, 17];

pub struct AttentionResult {
    pub curve: SimilarityCurve,
    /// Mean off-diagonal patch similarity, sharp and blurred.
    pub patch_sim_sharp: f64,
    pub patch_sim_blurred: f64,
}

pub fn desk_encoder() -> sharpblur::Result<EncoderHandle> {
    EncoderHandle::from_id(&ToyVitConfig { image_size: 64, patch_size: 8, embed_dim: 64, heads: 4, seed: 0 }.id())
}

fn mean_off_diagonal(encoder: &EncoderHandle, image: &Image) -> sharpblur::Result<f64> {
    let m = patch_similarity_matrix(encoder, image)?;
    let p = m.nrows() as f64;
    Ok((m.sum() - p) / (p * p - p))
}

pub fn run_example(n_images: usize) -> sharpblur::Result<AttentionResult> {
    let encoder = desk_encoder()?;
    let ds = toy_dataset(&ToyConfig { n_per_class: n_images.div_ceil(2).max(10), size: 64, seed: 4 })?;
    let images: Vec<Image> = ds.samples().iter().take(n_images).map(|s| s.image.clone()).collect();
    let curve = attention_similarity(&encoder, &images, &KERNEL_SIZES)?;
    let blurred = line_blur_each(&images[..1], 15.0)?;
    Ok(AttentionResult {
        curve,
        patch_sim_sharp: mean_off_diagonal(&encoder, &images[0])?,
        patch_sim_blurred: mean_off_diagonal(&encoder, &blurred[0])?,
    })
}

fn main() -> sharpblur::Result<()> {
    let r = run_example(32)?;
    for (k, s) in r.curve.kernel_sizes.iter().zip(&r.curve.similarity) {
        println!("kernel {k:>2}  similarity {s:.4}");
    }
    println!("mean patch similarity: sharp {:.3}  blurred {:.3}", r.patch_sim_sharp, r.patch_sim_blurred);
    Ok(())
}
