//! Paired sharp/blurred sample synthesis.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::convolve::convolve;
use super::degrade::{add_sensor_noise, down_up_sample, jpeg_degrade};
use super::kernel::{auto_kernel_size, parametric_kernel, BlurKernel, KernelFamily};
use super::trajectory::{rasterize_psf, sample_trajectory};
use crate::error::{Error, Result};
use crate::image::{Image, Plane};
use crate::label::Label;

/// Width of the mask feather band, in pixels on each side of the boundary.
pub const FEATHER_PX: f32 = 3.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlurMode {
    #[default]
    Global,
    Ccmba,
    Mixed,
}

impl std::str::FromStr for BlurMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(BlurMode::Global),
            "ccmba" => Ok(BlurMode::Ccmba),
            "mixed" => Ok(BlurMode::Mixed),
            _ => Err(Error::Unknown {
                kind: "blur mode",
                name: s.into(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlurPolicy {
    pub l_max: f64,
    pub jitter_std: f64,
    pub p_d: f64,
    pub sigma_defocus_max: f64,
    pub p_jpeg: f64,
    pub q_range: [u8; 2],
    pub p_noise: f64,
    pub noise_range: [f64; 2],
    pub p_resample: f64,
    pub scale_range: [f64; 2],
    pub mode: BlurMode,
}

impl Default for BlurPolicy {
    fn default() -> Self {
        Self {
            l_max: 15.0,
            jitter_std: 0.1,
            p_d: 0.3,
            sigma_defocus_max: 2.5,
            p_jpeg: 0.2,
            q_range: [70, 95],
            p_noise: 0.2,
            noise_range: [0.002, 0.01],
            p_resample: 0.2,
            scale_range: [0.5, 0.9],
            mode: BlurMode::Global,
        }
    }
}

impl BlurPolicy {
    /// Motion only, no co-degradations.
    pub fn motion_only(l_max: f64) -> Self {
        Self {
            l_max,
            p_d: 0.0,
            p_jpeg: 0.0,
            p_noise: 0.0,
            p_resample: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_max > 0.0 && self.l_max.is_finite()) {
            return Err(Error::invalid("l_max", "must be positive"));
        }
        if !(self.jitter_std >= 0.0) {
            return Err(Error::invalid("jitter_std", "must be >= 0"));
        }
        for (name, p) in [
            ("p_d", self.p_d),
            ("p_jpeg", self.p_jpeg),
            ("p_noise", self.p_noise),
            ("p_resample", self.p_resample),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, format!("probability {p} outside [0, 1]")));
            }
        }
        if !(self.sigma_defocus_max >= 0.0) {
            return Err(Error::invalid("sigma_defocus_max", "must be >= 0"));
        }
        let [q0, q1] = self.q_range;
        if q0 > q1 || q0 < 70 || q1 > 95 {
            return Err(Error::invalid("q_range", format!("[{q0}, {q1}] must lie in [70, 95]")));
        }
        let [n0, n1] = self.noise_range;
        if !(0.0 <= n0 && n0 <= n1) {
            return Err(Error::invalid("noise_range", "need 0 <= lo <= hi"));
        }
        let [s0, s1] = self.scale_range;
        if !(0.0 < s0 && s0 <= s1 && s1 < 1.0) {
            return Err(Error::invalid("scale_range", "need 0 < lo <= hi < 1"));
        }
        Ok(())
    }

    /// Window size used for this policy's motion kernels.
    pub fn motion_kernel_size(&self) -> usize {
        auto_kernel_size(KernelFamily::MotionPsf, self.l_max)
    }
}

/// Everything applied to produce a blurred view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecord {
    pub kernel: BlurKernel,
    pub length: f64,
    pub direction: f64,
    pub defocus_sigma: Option<f64>,
    pub jpeg_quality: Option<u8>,
    pub noise_sigma: Option<f64>,
    pub resample_scale: Option<f64>,
    /// Applied mode; `Mixed` never appears here, it resolves per sample.
    pub mode: BlurMode,
}

impl DegradationRecord {
    pub fn severity(&self) -> f64 {
        self.kernel.severity()
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if let Some(q) = self.jpeg_quality {
            if !(70..=95).contains(&q) {
                return Err(Error::invalid("jpeg_quality", format!("{q} outside [70, 95]")));
            }
        }
        if let Some(s) = self.resample_scale {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::invalid("resample_scale", format!("{s} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub sharp: Image,
    pub blurred: Image,
    pub label: Label,
    pub degradation: DegradationRecord,
}

/// Draws a blurred view of `image`.
///
/// Stages run in the order motion, defocus, resample, noise, JPEG. Every
/// random draw happens regardless of whether its stage fires, so the stream
/// position after a call does not depend on the outcome. `mask` is used
/// for CCMBA; without one a random ellipse is drawn.
pub fn synthesize_pair<R: Rng + ?Sized>(
    image: &Image,
    label: Label,
    policy: &BlurPolicy,
    mask: Option<&Plane>,
    rng: &mut R,
) -> Result<PairedSample> {
    policy.validate()?;
    if !image.is_in_unit_range() {
        return Err(Error::invalid(
            "image",
            "pair synthesis runs on [0, 1] pixels, before channel normalization",
        ));
    }

    let traj = sample_trajectory(rng, policy.l_max, policy.jitter_std)?;
    let motion = rasterize_psf(&traj, policy.motion_kernel_size(), policy.l_max)?;

    let u_defocus: f64 = rng.random();
    let sigma_d = rng.random::<f64>() * policy.sigma_defocus_max;
    let u_resample: f64 = rng.random();
    let scale = lerp(policy.scale_range, rng.random());
    let u_noise: f64 = rng.random();
    let noise_sigma = lerp(policy.noise_range, rng.random());
    let u_jpeg: f64 = rng.random();
    let quality = rng.random_range(policy.q_range[0]..=policy.q_range[1]);
    let u_mode: f64 = rng.random();
    let mask_seed: u64 = rng.random();
    let noise_seed: u64 = rng.random();

    let mode = match policy.mode {
        BlurMode::Mixed if u_mode < 0.5 => BlurMode::Global,
        BlurMode::Mixed => BlurMode::Ccmba,
        m => m,
    };
    let drawn_mask;
    let region = if mode == BlurMode::Ccmba {
        Some(match mask {
            Some(m) => m,
            None => {
                let mut mrng = crate::rng::stream(mask_seed, &[]);
                drawn_mask = random_ellipse_mask(image.width(), image.height(), &mut mrng);
                &drawn_mask
            }
        })
    } else {
        None
    };
    let blur = |img: &Image, k: &BlurKernel| -> Result<Image> {
        match region {
            Some(m) => apply_ccmba(img, m, k),
            None => convolve(img, k),
        }
    };

    let mut out = blur(image, &motion)?;

    let defocus_sigma = if u_defocus < policy.p_d && sigma_d > 0.0 {
        let k = parametric_kernel(
            KernelFamily::Defocus,
            sigma_d,
            auto_kernel_size(KernelFamily::Defocus, sigma_d),
        )?;
        out = blur(&out, &k)?;
        Some(sigma_d)
    } else {
        None
    };

    let resample_scale = if u_resample < policy.p_resample {
        out = down_up_sample(&out, scale)?;
        Some(scale)
    } else {
        None
    };

    let noise_sigma = if u_noise < policy.p_noise {
        out = add_sensor_noise(&out, noise_sigma, &mut crate::rng::stream(noise_seed, &[]))?;
        Some(noise_sigma)
    } else {
        None
    };

    let jpeg_quality = if u_jpeg < policy.p_jpeg {
        out = jpeg_degrade(&out, quality)?;
        Some(quality)
    } else {
        None
    };

    Ok(PairedSample {
        sharp: image.clone(),
        blurred: out,
        label,
        degradation: DegradationRecord {
            kernel: motion,
            length: traj.length(),
            direction: traj.direction(),
            defocus_sigma,
            jpeg_quality,
            noise_sigma,
            resample_scale,
            mode,
        },
    })
}

fn lerp([lo, hi]: [f64; 2], t: f64) -> f64 {
    lo + (hi - lo) * t
}

/// Blurs the masked region and keeps the rest, with a linear feather of
/// [`FEATHER_PX`] pixels on each side of the mask boundary.
pub fn apply_ccmba(image: &Image, mask: &Plane, kernel: &BlurKernel) -> Result<Image> {
    if mask.dims() != image.dims() {
        return Err(Error::ShapeMismatch(format!(
            "mask {:?} vs image {:?}",
            mask.dims(),
            image.dims()
        )));
    }
    let alpha = feather_alpha(mask);
    let blurred = convolve(image, kernel)?;
    let mut out = image.clone();
    let (w, h) = image.dims();
    for y in 0..h {
        for x in 0..w {
            let a = alpha.get(x, y);
            if a == 0.0 {
                continue;
            }
            for c in 0..3 {
                let v = a * blurred.get(x, y, c) + (1.0 - a) * image.get(x, y, c);
                out.set(x, y, c, v);
            }
        }
    }
    Ok(out)
}

/// Blend weight per pixel: `0.5 + s / (2 * FEATHER_PX)` clamped to `[0, 1]`,
/// where `s` is the signed distance from the pixel center to the mask
/// boundary (positive inside).
pub fn feather_alpha(mask: &Plane) -> Plane {
    let (w, h) = mask.dims();
    let reach = FEATHER_PX.ceil() as isize + 1;
    let inside = |x: usize, y: usize| mask.get(x, y) >= 0.5;
    Plane::from_fn(w, h, |x, y| {
        let me = inside(x, y);
        let mut best = f32::INFINITY;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                if inside(nx as usize, ny as usize) != me {
                    best = best.min(((dx * dx + dy * dy) as f32).sqrt());
                }
            }
        }
        let s = if best.is_finite() { best - 0.5 } else { f32::INFINITY };
        let s = if me { s } else { -s };
        (0.5 + s / (2.0 * FEATHER_PX)).clamp(0.0, 1.0)
    })
}

/// Random filled ellipse covering roughly 20-60% of the frame.
pub fn random_ellipse_mask<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Plane {
    let (w, h) = (width as f64, height as f64);
    let area = rng.random_range(0.2..0.6) * w * h;
    let aspect: f64 = rng.random_range(0.75..1.333);
    let ra = (area * aspect / PI).sqrt().min(w / 2.0);
    let rb = (area / (PI * aspect)).sqrt().min(h / 2.0);
    let cx = if w > 2.0 * ra { rng.random_range(ra..=w - ra) } else { w / 2.0 };
    let cy = if h > 2.0 * rb { rng.random_range(rb..=h - rb) } else { h / 2.0 };
    let theta: f64 = rng.random_range(0.0..PI);
    let (s, c) = theta.sin_cos();
    Plane::from_fn(width, height, |x, y| {
        let dx = x as f64 + 0.5 - cx;
        let dy = y as f64 + 0.5 - cy;
        let u = (c * dx + s * dy) / ra;
        let v = (-s * dx + c * dy) / rb;
        if u * u + v * v <= 1.0 {
            1.0
        } else {
            0.0
        }
    })
}
