use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blur::{convolve, motion_line};
use crate::data::normalize;
use crate::encoder::EncoderHandle;
use crate::error::{Error, Result};
use crate::image::{resize_bilinear, Image};

/// Mean clean-vs-blurred attention similarity per kernel size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCurve {
    pub kernel_sizes: Vec<usize>,
    pub similarity: Vec<f64>,
}

impl SimilarityCurve {
    /// Whether each value is at most `tol` above its predecessor.
    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.similarity.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::Numerical("cosine of a zero vector".into()));
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

fn fit_to_encoder(encoder: &EncoderHandle, image: &Image) -> Image {
    let s = encoder.input_size();
    resize_bilinear(image, s, s)
}

/// For each odd kernel size `k`, blurs every image with a straight-line
/// motion PSF of length `k - 1` (image `i` of `n` at angle `pi * i / n`) and
/// averages the cosine similarity between the flattened clean and blurred
/// class-token attention maps.
pub fn attention_similarity(
    encoder: &EncoderHandle,
    images: &[Image],
    kernel_sizes: &[usize],
) -> Result<SimilarityCurve> {
    if images.is_empty() {
        return Err(Error::invalid("images", "need at least one image"));
    }
    if let Some(k) = kernel_sizes.iter().find(|&&k| k % 2 == 0) {
        return Err(Error::invalid("kernel_sizes", format!("{k} is not odd")));
    }
    let l_max = kernel_sizes.iter().copied().max().unwrap_or(1).saturating_sub(1).max(1) as f64;
    let n = images.len();
    let inputs: Vec<Image> = images.iter().map(|im| fit_to_encoder(encoder, im)).collect();
    let clean: Vec<Array2<f64>> = inputs
        .par_iter()
        .map(|im| Ok(encoder.encode(&normalize(im))?.attention))
        .collect::<Result<_>>()?;

    let mut similarity = Vec::with_capacity(kernel_sizes.len());
    for &k in kernel_sizes {
        let sims: Vec<f64> = inputs
            .par_iter()
            .enumerate()
            .map(|(i, im)| {
                let angle = std::f64::consts::PI * i as f64 / n as f64;
                let kernel = motion_line((k - 1) as f64, angle, k, l_max)?;
                let blurred = convolve(im, &kernel)?;
                let att = encoder.encode(&normalize(&blurred))?.attention;
                cosine(
                    clean[i].view().into_shape_with_order(clean[i].len()).expect("contiguous"),
                    att.view().into_shape_with_order(att.len()).expect("contiguous"),
                )
            })
            .collect::<Result<_>>()?;
        similarity.push(sims.iter().sum::<f64>() / n as f64);
    }
    Ok(SimilarityCurve {
        kernel_sizes: kernel_sizes.to_vec(),
        similarity,
    })
}

/// `P x P` cosine similarities between all patch tokens.
pub fn patch_similarity_matrix(encoder: &EncoderHandle, image: &Image) -> Result<Array2<f64>> {
    let tokens = encoder.encode(&normalize(&fit_to_encoder(encoder, image)))?.patch_tokens;
    let mut unit = tokens.clone();
    for (i, mut row) in unit.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if !(n > 0.0) {
            return Err(Error::Numerical(format!("zero patch token {i}")));
        }
        row /= n;
    }
    let mut sim = unit.dot(&unit.t());
    sim.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    for i in 0..sim.nrows() {
        sim[[i, i]] = 1.0;
    }
    Ok(sim)
}
