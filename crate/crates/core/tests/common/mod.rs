//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sharpblur::blur::BlurKernel;
use sharpblur::image::{reflect_index, Image};

pub fn gauss_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn focal_ref(logits: &Array2<f64>, labels: &[usize], alpha: [f64; 2], gamma: f64) -> f64 {
    let rs = rows(logits);
    let mut total = 0.0;
    for (r, &c) in rs.iter().zip(labels) {
        let p = softmax(r)[c];
        total += -alpha[c] * (1.0 - p).powf(gamma) * p.ln();
    }
    total / rs.len() as f64
}

pub fn cross_entropy_ref(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let rs = rows(logits);
    rs.iter().zip(labels).map(|(r, &c)| -softmax(r)[c].ln()).sum::<f64>() / rs.len() as f64
}

pub fn feat_ref(f_s: &Array2<f64>, f_t: &Array2<f64>) -> f64 {
    let (a, b) = (rows(f_s), rows(f_t));
    1.0 - a.iter().zip(&b).map(|(x, y)| cos(x, y)).sum::<f64>() / a.len() as f64
}

pub fn kd_ref(u_t: &Array2<f64>, u_s: &Array2<f64>, t: f64) -> f64 {
    let (a, b) = (rows(u_t), rows(u_s));
    let mut total = 0.0;
    for (x, y) in a.iter().zip(&b) {
        let q = softmax(&x.iter().map(|v| v / t).collect::<Vec<_>>());
        let r = softmax(&y.iter().map(|v| v / t).collect::<Vec<_>>());
        total += q.iter().zip(&r).map(|(qi, ri)| qi * (qi / ri).ln()).sum::<f64>();
    }
    t * t * total / a.len() as f64
}

/// Triple loop over anchors `i`, partners `j != i` and denominator
/// candidates `k != i` with `|b_i - b_k| >= |b_i - b_j|`.
pub fn ordcon_ref(emb: &Array2<f64>, b: &[f64], anchors: &[usize], tau: f64) -> f64 {
    let z = rows(emb);
    let m = z.len();
    let mut outer = 0.0;
    for &i in anchors {
        let mut inner = 0.0;
        for j in 0..m {
            if j == i {
                continue;
            }
            let dij = (b[i] - b[j]).abs();
            let num = (cos(&z[i], &z[j]) / tau).exp();
            let mut den = 0.0;
            for k in 0..m {
                if k != i && (b[i] - b[k]).abs() >= dij {
                    den += (cos(&z[i], &z[k]) / tau).exp();
                }
            }
            inner += -(num / den).ln();
        }
        outer += inner / (m - 1) as f64;
    }
    outer / anchors.len() as f64
}

/// Standard InfoNCE over all pairs: every other view is in the denominator.
pub fn info_nce_ref(emb: &Array2<f64>, anchors: &[usize], tau: f64) -> f64 {
    let m = emb.nrows();
    let norms: Array1<f64> = emb.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut sim = emb.dot(&emb.t());
    for i in 0..m {
        for j in 0..m {
            sim[[i, j]] /= norms[i] * norms[j] * tau;
        }
    }
    let mut total = 0.0;
    for &i in anchors {
        let lse = (0..m).filter(|&k| k != i).map(|k| sim[[i, k]].exp()).sum::<f64>().ln();
        total += (0..m).filter(|&j| j != i).map(|j| lse - sim[[i, j]]).sum::<f64>() / (m - 1) as f64;
    }
    total / anchors.len() as f64
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_grad(x: &Array2<f64>, h: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    let mut xp = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = xp[[r, c]];
        xp[[r, c]] = orig + h;
        let fp = f(&xp);
        xp[[r, c]] = orig - h;
        let fm = f(&xp);
        xp[[r, c]] = orig;
        g[[r, c]] = (fp - fm) / (2.0 * h);
    }
    g
}

/// `||a - n|| / max(||n||, floor)`.
pub fn rel_err(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let diff = (analytic - numeric).mapv(|v| v * v).sum().sqrt();
    let norm = numeric.mapv(|v| v * v).sum().sqrt();
    diff / norm.max(1e-6)
}

/// Nested-loop convolution with half-sample reflection, no clamping.
pub fn naive_convolve(image: &Image, kernel: &BlurKernel) -> Vec<f64> {
    let (w, h) = image.dims();
    let n = kernel.size();
    let r = (n / 2) as isize;
    let mut out = vec![0.0; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for row in 0..n {
                    for col in 0..n {
                        let (dx, dy) = (col as isize - r, row as isize - r);
                        let sx = reflect_index(x as isize - dx, w);
                        let sy = reflect_index(y as isize - dy, h);
                        acc += kernel.at(col, row) * image.get(sx, sy, c) as f64;
                    }
                }
                out[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    out
}

/// A random small batch covering every loss input.
pub struct RandomBatch {
    pub teacher_logits: Array2<f64>,
    pub student_logits: Array2<f64>,
    pub teacher_features: Array2<f64>,
    pub student_features: Array2<f64>,
    pub embeddings: Array2<f64>,
    pub blur_levels: Vec<f64>,
    pub anchors: Vec<usize>,
    pub labels: Vec<usize>,
}

impl RandomBatch {
    /// `N <= 4` paired samples, so `M = 2N <= 8` views, and `k <= 16`.
    /// Blur levels sit on a coarse grid so ties are common.
    pub fn draw<R: Rng>(rng: &mut R) -> Self {
        let n = rng.random_range(1..=4);
        let k = rng.random_range(2..=16);
        let m = 2 * n;
        let blur_levels: Vec<f64> = (0..m)
            .map(|i| if i < n { 0.0 } else { rng.random_range(0..=4) as f64 / 4.0 })
            .collect();
        Self {
            teacher_logits: gauss_matrix(n, 2, 2.0, rng),
            student_logits: gauss_matrix(n, 2, 2.0, rng),
            teacher_features: gauss_matrix(n, k, 1.0, rng),
            student_features: gauss_matrix(n, k, 1.0, rng),
            embeddings: gauss_matrix(m, k, 1.0, rng),
            blur_levels,
            anchors: (0..n).collect(),
            labels: (0..n).map(|_| rng.random_range(0..2)).collect(),
        }
    }

    pub fn views(&self) -> sharpblur::losses::BatchViews<'_> {
        sharpblur::losses::BatchViews {
            teacher_logits: self.teacher_logits.view(),
            student_logits: self.student_logits.view(),
            teacher_features: self.teacher_features.view(),
            student_features: self.student_features.view(),
            embeddings: self.embeddings.view(),
            blur_levels: &self.blur_levels,
            anchors: &self.anchors,
            labels: &self.labels,
        }
    }
}

/// Worst absolute difference between each loss and its brute-force
/// reference over `batches` random batches: `[focal, feat, kd, ordcon]`.
pub fn loss_oracle_errors(batches: usize, seed: u64) -> [f64; 4] {
    use sharpblur::losses::*;
    let mut rng = sharpblur::rng::stream(seed, &[]);
    let mut worst = [0.0f64; 4];
    for _ in 0..batches {
        let b = RandomBatch::draw(&mut rng);
        let alpha = [rng.random_range(0.25..2.0), rng.random_range(0.25..2.0)];
        let gamma = rng.random_range(0.0..3.0);
        let t = rng.random_range(0.5..4.0);
        let tau = rng.random_range(0.05..1.0);
        let errs = [
            focal_loss(b.student_logits.view(), &b.labels, alpha, gamma).unwrap().value
                - focal_ref(&b.student_logits, &b.labels, alpha, gamma),
            feature_alignment_loss(b.student_features.view(), b.teacher_features.view()).unwrap().value
                - feat_ref(&b.student_features, &b.teacher_features),
            kd_loss(b.teacher_logits.view(), b.student_logits.view(), t).unwrap().value
                - kd_ref(&b.teacher_logits, &b.student_logits, t),
            ordinal_contrastive_loss(b.embeddings.view(), &b.blur_levels, &b.anchors, tau).unwrap().value
                - ordcon_ref(&b.embeddings, &b.blur_levels, &b.anchors, tau),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e.abs());
        }
    }
    worst
}

/// Worst relative error between analytic and finite-difference gradients
/// over `batches` random batches: `[focal, feat, kd, ordcon, total]`.
pub fn gradient_errors(batches: usize, seed: u64, h: f64) -> [f64; 5] {
    use sharpblur::losses::*;
    let mut rng = sharpblur::rng::stream(seed, &[]);
    let w = LossWeights::default();
    let mut worst = [0.0f64; 5];
    for _ in 0..batches {
        let b = RandomBatch::draw(&mut rng);
        let (a, g) = (w.alpha_focal, w.gamma_focal);

        let an = focal_loss(b.student_logits.view(), &b.labels, a, g).unwrap().grad;
        let nu = fd_grad(&b.student_logits, h, |x| focal_loss(x.view(), &b.labels, a, g).unwrap().value);
        let e_focal = rel_err(&an, &nu);

        let an = feature_alignment_loss(b.student_features.view(), b.teacher_features.view()).unwrap().grad;
        let nu = fd_grad(&b.student_features, h, |x| {
            feature_alignment_loss(x.view(), b.teacher_features.view()).unwrap().value
        });
        let e_feat = rel_err(&an, &nu);

        let an = kd_loss(b.teacher_logits.view(), b.student_logits.view(), w.temperature).unwrap().grad;
        let nu = fd_grad(&b.student_logits, h, |x| {
            kd_loss(b.teacher_logits.view(), x.view(), w.temperature).unwrap().value
        });
        let e_kd = rel_err(&an, &nu);

        let an = ordinal_contrastive_loss(b.embeddings.view(), &b.blur_levels, &b.anchors, w.tau).unwrap().grad;
        let nu = fd_grad(&b.embeddings, h, |x| {
            ordinal_contrastive_loss(x.view(), &b.blur_levels, &b.anchors, w.tau).unwrap().value
        });
        let e_ord = rel_err(&an, &nu);

        let (_, grads) = total_loss(&b.views(), &w).unwrap();
        let total_with = |logits: &Array2<f64>, feats: &Array2<f64>, emb: &Array2<f64>| {
            let v = BatchViews {
                student_logits: logits.view(),
                student_features: feats.view(),
                embeddings: emb.view(),
                ..b.views()
            };
            total_loss(&v, &w).unwrap().0.total
        };
        let parts = [
            (
                grads.student_logits.clone(),
                fd_grad(&b.student_logits, h, |x| total_with(x, &b.student_features, &b.embeddings)),
            ),
            (
                grads.student_features.clone(),
                fd_grad(&b.student_features, h, |x| total_with(&b.student_logits, x, &b.embeddings)),
            ),
            (
                grads.embeddings.clone(),
                fd_grad(&b.embeddings, h, |x| total_with(&b.student_logits, &b.student_features, x)),
            ),
        ];
        let e_total = parts.iter().map(|(a, n)| rel_err(a, n)).fold(0.0, f64::max);

        for (wst, e) in worst.iter_mut().zip([e_focal, e_feat, e_kd, e_ord, e_total]) {
            *wst = wst.max(e);
        }
    }
    worst
}

/// One random kernel of any family that has a convolution kernel.
pub fn random_kernel<R: Rng>(rng: &mut R) -> BlurKernel {
    use sharpblur::blur::*;
    let family = [
        KernelFamily::MotionPsf,
        KernelFamily::Defocus,
        KernelFamily::Gaussian,
        KernelFamily::Box,
        KernelFamily::Bokeh,
        KernelFamily::Identity,
    ][rng.random_range(0..6)];
    match family {
        KernelFamily::MotionPsf => {
            let l_max = rng.random_range(0.5..21.0);
            let size = auto_kernel_size(family, l_max);
            if rng.random_bool(0.5) {
                let jitter = rng.random_range(0.0..0.5);
                let traj = sample_trajectory(rng, l_max, jitter).unwrap();
                rasterize_psf(&traj, size, l_max).unwrap()
            } else {
                let len = rng.random_range(0.0..=l_max);
                motion_line(len, rng.random_range(0.0..std::f64::consts::PI), size, l_max).unwrap()
            }
        }
        KernelFamily::Identity => parametric_kernel(family, 1.0, 1).unwrap(),
        _ => {
            let param = match family {
                KernelFamily::Box | KernelFamily::Bokeh => rng.random_range(1.0..family.max_param()),
                _ => rng.random_range(0.05..family.max_param()),
            };
            let size = auto_kernel_size(family, param);
            parametric_kernel(family, param, size).unwrap()
        }
    }
}

/// `(worst |mass - 1|, smallest weight)` over `n` random kernels.
pub fn kernel_invariant_stats(n: usize, seed: u64) -> (f64, f64) {
    let mut rng = sharpblur::rng::stream(seed, &[]);
    let mut worst = 0.0f64;
    let mut min_w = f64::INFINITY;
    for _ in 0..n {
        let k = random_kernel(&mut rng);
        worst = worst.max((k.weights().iter().sum::<f64>() - 1.0).abs());
        min_w = k.weights().iter().copied().fold(min_w, f64::min);
    }
    (worst, min_w)
}

pub fn random_image<R: Rng>(w: usize, h: usize, rng: &mut R) -> Image {
    Image::from_fn(w, h, |_, _| std::array::from_fn(|_| rng.random::<f32>()))
}

/// Worst difference between `convolve` and the nested-loop oracle over
/// `n` random kernels on random 8x8 images.
pub fn convolution_oracle_error(n: usize, seed: u64) -> f64 {
    let mut rng = sharpblur::rng::stream(seed, &[]);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let k = random_kernel(&mut rng);
        let img = random_image(8, 8, &mut rng);
        let fast = sharpblur::blur::convolve(&img, &k).unwrap();
        let slow = naive_convolve(&img, &k);
        for (a, b) in fast.as_slice().iter().zip(&slow) {
            worst = worst.max((*a as f64 - b.clamp(0.0, 1.0)).abs());
        }
    }
    worst
}

/// A small toy problem for fast training tests.
pub struct Tiny {
    pub train: sharpblur::data::Dataset,
    pub encoder: sharpblur::encoder::EncoderHandle,
    pub size: sharpblur::data::PreprocessSize,
}

pub fn tiny(n_per_class: usize, seed: u64) -> Tiny {
    use sharpblur::data::*;
    use sharpblur::encoder::*;
    let train = toy_dataset(&ToyConfig {
        n_per_class,
        size: 40,
        seed,
    })
    .unwrap();
    let enc = ToyVitConfig {
        image_size: 32,
        patch_size: 8,
        embed_dim: 32,
        heads: 2,
        seed: 0,
    };
    Tiny {
        train,
        encoder: EncoderHandle::from_id(&enc.id()).unwrap(),
        size: PreprocessSize { resize: 40, crop: 32 },
    }
}

pub fn phase(role: sharpblur::heads::Role, size: sharpblur::data::PreprocessSize, epochs: usize) -> sharpblur::training::PhaseConfig {
    use sharpblur::training::PhaseConfig;
    let base = match role {
        sharpblur::heads::Role::Teacher => PhaseConfig::teacher(),
        sharpblur::heads::Role::Student => PhaseConfig::student(),
    };
    PhaseConfig {
        epochs,
        base_lr: 1e-3,
        batch_size: 8,
        preprocess: size,
        ..base
    }
}
