use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blur::{jpeg_degrade, synthesize_pair, BlurMode, BlurPolicy, PairedSample};
use crate::error::{Error, Result};
use crate::heads::Role;
use crate::image::{sample_bilinear, Image, Plane, LUMA};
use crate::label::Label;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorJitter {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue shift in turns.
    pub hue: f64,
}

impl Default for ColorJitter {
    fn default() -> Self {
        Self {
            brightness: 0.1,
            contrast: 0.1,
            saturation: 0.1,
            hue: 0.05,
        }
    }
}

impl ColorJitter {
    pub fn off() -> Self {
        Self {
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JpegAugment {
    pub p: f64,
    pub quality: [u8; 2],
}

impl Default for JpegAugment {
    fn default() -> Self {
        Self {
            p: 0.3,
            quality: [85, 95],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    pub color_jitter: ColorJitter,
    /// Rotation drawn from `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f64,
    pub jpeg: JpegAugment,
    /// `None` for the teacher phase; overrides `blur_policy.mode` otherwise.
    pub blur_mode: Option<BlurMode>,
    pub blur_policy: BlurPolicy,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self::teacher()
    }
}

impl AugmentPolicy {
    pub fn teacher() -> Self {
        Self {
            color_jitter: ColorJitter::default(),
            rotation_deg: 5.0,
            jpeg: JpegAugment::default(),
            blur_mode: None,
            blur_policy: BlurPolicy::default(),
        }
    }

    pub fn student() -> Self {
        Self {
            blur_mode: Some(BlurMode::Mixed),
            ..Self::teacher()
        }
    }

    /// No photometric or geometric change; blur as given.
    pub fn plain(blur_mode: Option<BlurMode>) -> Self {
        Self {
            color_jitter: ColorJitter::off(),
            rotation_deg: 0.0,
            jpeg: JpegAugment {
                p: 0.0,
                ..JpegAugment::default()
            },
            blur_mode,
            blur_policy: BlurPolicy::default(),
        }
    }

    pub fn validate(&self, role: Role) -> Result<()> {
        let cj = &self.color_jitter;
        for (name, v, max) in [
            ("brightness", cj.brightness, 1.0),
            ("contrast", cj.contrast, 1.0),
            ("saturation", cj.saturation, 1.0),
            ("hue", cj.hue, 0.5),
        ] {
            if !(0.0..=max).contains(&v) {
                return Err(Error::invalid("color_jitter", format!("{name} {v} outside [0, {max}]")));
            }
        }
        if !(0.0..=180.0).contains(&self.rotation_deg) {
            return Err(Error::invalid("rotation_deg", format!("{} outside [0, 180]", self.rotation_deg)));
        }
        if !(0.0..=1.0).contains(&self.jpeg.p) {
            return Err(Error::invalid("jpeg.p", format!("{} outside [0, 1]", self.jpeg.p)));
        }
        let [q0, q1] = self.jpeg.quality;
        if q0 == 0 || q0 > q1 || q1 > 100 {
            return Err(Error::invalid("jpeg.quality", format!("[{q0}, {q1}] must lie in [1, 100]")));
        }
        match (role, self.blur_mode) {
            (Role::Teacher, Some(m)) => Err(Error::invalid(
                "blur_mode",
                format!("teacher phase sees sharp views only, got {m:?}"),
            )),
            (Role::Student, None) => Err(Error::invalid("blur_mode", "student phase needs a blur mode")),
            (Role::Student, Some(_)) => self.blur_policy.validate(),
            (Role::Teacher, None) => Ok(()),
        }
    }
}

/// One augmented training view.
#[derive(Clone, Debug)]
pub struct AugmentedView {
    /// Sharp view after color, rotation and JPEG.
    pub image: Image,
    pub mask: Option<Plane>,
    pub rotation_deg: f64,
    pub jpeg_quality: Option<u8>,
    /// Blurred partner of `image`, student phase only.
    pub pair: Option<PairedSample>,
}

/// Color jitter, small rotation and probabilistic JPEG; in the student phase
/// the result is also routed through pair synthesis. All draws happen in a
/// fixed order whether or not a stage fires.
pub fn augment<R: Rng + ?Sized>(
    image: &Image,
    mask: Option<&Plane>,
    label: Label,
    policy: &AugmentPolicy,
    role: Role,
    rng: &mut R,
) -> Result<AugmentedView> {
    policy.validate(role)?;
    let mut sym = |half: f64| (2.0 * rng.random::<f64>() - 1.0) * half;
    let cj = &policy.color_jitter;
    let brightness = 1.0 + sym(cj.brightness);
    let contrast = 1.0 + sym(cj.contrast);
    let saturation = 1.0 + sym(cj.saturation);
    let hue = sym(cj.hue);
    let rotation = sym(policy.rotation_deg);
    let u_jpeg: f64 = rng.random();
    let quality = rng.random_range(policy.jpeg.quality[0]..=policy.jpeg.quality[1]);

    let mut out = color_jitter(image, brightness, contrast, saturation, hue);
    let mut mask = mask.cloned();
    if rotation != 0.0 {
        out = rotate(&out, rotation);
        mask = mask.map(|m| rotate_mask(&m, rotation));
    }
    let jpeg_quality = if u_jpeg < policy.jpeg.p {
        out = jpeg_degrade(&out, quality)?;
        Some(quality)
    } else {
        None
    };

    let pair = match (role, policy.blur_mode) {
        (Role::Student, Some(mode)) => {
            let bp = BlurPolicy {
                mode,
                ..policy.blur_policy.clone()
            };
            Some(synthesize_pair(&out, label, &bp, mask.as_ref(), rng)?)
        }
        _ => None,
    };
    Ok(AugmentedView {
        image: out,
        mask,
        rotation_deg: rotation,
        jpeg_quality,
        pair,
    })
}

/// Brightness scale, contrast about the mean luma, saturation about the
/// pixel luma, then a hue rotation in YIQ. Unit factors and a zero hue are
/// skipped exactly.
pub fn color_jitter(image: &Image, brightness: f64, contrast: f64, saturation: f64, hue: f64) -> Image {
    let mut out = image.clone();
    let px = |img: &mut Image, f: &dyn Fn([f32; 3]) -> [f32; 3]| {
        for p in img.as_mut_slice().chunks_exact_mut(3) {
            let q = f([p[0], p[1], p[2]]);
            p.copy_from_slice(&q);
        }
    };
    let luma = |p: [f32; 3]| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2];
    if brightness != 1.0 {
        let b = brightness as f32;
        px(&mut out, &|p| p.map(|v| v * b));
    }
    if contrast != 1.0 {
        let m = out.luma().mean() as f32;
        let c = contrast as f32;
        px(&mut out, &|p| p.map(|v| m + (v - m) * c));
    }
    if saturation != 1.0 {
        let s = saturation as f32;
        px(&mut out, &|p| {
            let y = luma(p);
            p.map(|v| y + (v - y) * s)
        });
    }
    if hue != 0.0 {
        let (sin, cos) = (2.0 * std::f64::consts::PI * hue).sin_cos();
        let (sin, cos) = (sin as f32, cos as f32);
        px(&mut out, &|[r, g, b]| {
            let y = 0.299 * r + 0.587 * g + 0.114 * b;
            let i = 0.596 * r - 0.274 * g - 0.322 * b;
            let q = 0.211 * r - 0.523 * g + 0.312 * b;
            let (i, q) = (i * cos - q * sin, i * sin + q * cos);
            [
                y + 0.956 * i + 0.621 * q,
                y - 0.272 * i - 0.647 * q,
                y - 1.106 * i + 1.703 * q,
            ]
        });
    }
    out.clamp01();
    out
}

/// Rotation by `degrees` about the image center, bilinear with reflected
/// borders.
pub fn rotate(image: &Image, degrees: f64) -> Image {
    let (w, h) = image.dims();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = Image::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let sx = c * dx + s * dy + cx;
        let sy = -s * dx + c * dy + cy;
        sample_bilinear(image, sx as f32, sy as f32)
    });
    out.clamp01();
    out
}

fn rotate_mask(mask: &Plane, degrees: f64) -> Plane {
    let img = Image::from_channels([mask, mask, mask]).expect("same dims");
    let r = rotate(&img, degrees).channel(0);
    Plane::from_fn(mask.width(), mask.height(), |x, y| if r.get(x, y) >= 0.5 { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn img() -> Image {
        Image::from_fn(16, 12, |x, y| [x as f32 / 16.0, y as f32 / 12.0, 0.4])
    }

    #[test]
    fn plain_teacher_policy_is_identity() {
        let im = img();
        let v = augment(&im, None, Label::Real, &AugmentPolicy::plain(None), Role::Teacher, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(v.image, im);
        assert!(v.pair.is_none());
        assert!(v.jpeg_quality.is_none());
    }

    #[test]
    fn phase_and_mode_must_agree() {
        let im = img();
        let mut r = rng::stream(0, &[]);
        assert!(augment(&im, None, Label::Real, &AugmentPolicy::student(), Role::Teacher, &mut r).is_err());
        assert!(augment(&im, None, Label::Real, &AugmentPolicy::teacher(), Role::Student, &mut r).is_err());
        let v = augment(&im, None, Label::Fake, &AugmentPolicy::student(), Role::Student, &mut r).unwrap();
        let pair = v.pair.unwrap();
        assert_eq!(pair.sharp, v.image);
        assert_eq!(pair.label, Label::Fake);
    }

    #[test]
    fn zero_rotation_and_hue_round_trip() {
        let im = img();
        assert_eq!(rotate(&im, 0.0), im);
        let im = Image::from_fn(16, 12, |x, y| [0.3 + x as f32 / 40.0, 0.3 + y as f32 / 30.0, 0.5]);
        let back = color_jitter(&color_jitter(&im, 1.0, 1.0, 1.0, 0.03), 1.0, 1.0, 1.0, -0.03);
        assert!(back.max_abs_diff(&im) < 5e-3);
    }
}
