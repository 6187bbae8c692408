use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit-mass invariant.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    MotionPsf,
    Defocus,
    Gaussian,
    Box,
    Radial,
    Bokeh,
    Identity,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 7] = [
        KernelFamily::MotionPsf,
        KernelFamily::Defocus,
        KernelFamily::Gaussian,
        KernelFamily::Box,
        KernelFamily::Radial,
        KernelFamily::Bokeh,
        KernelFamily::Identity,
    ];

    /// Parameter value that maps to severity 1.
    ///
    /// Motion uses the generating policy's `L_max` instead; the value here
    /// is only the default for parametric evaluation kernels.
    pub fn max_param(self) -> f64 {
        match self {
            KernelFamily::MotionPsf => 21.0,
            KernelFamily::Defocus => 2.5,
            KernelFamily::Gaussian => 5.0,
            KernelFamily::Box => 15.0,
            KernelFamily::Radial => 10.0,
            KernelFamily::Bokeh => 8.0,
            KernelFamily::Identity => 1.0,
        }
    }

    pub fn severity(self, param: f64) -> f64 {
        match self {
            KernelFamily::Identity => 0.0,
            _ => (param / self.max_param()).clamp(0.0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::MotionPsf => "motion",
            KernelFamily::Defocus => "defocus",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Box => "box",
            KernelFamily::Radial => "radial",
            KernelFamily::Bokeh => "bokeh",
            KernelFamily::Identity => "identity",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "motion" | "motion_psf" => KernelFamily::MotionPsf,
            "defocus" => KernelFamily::Defocus,
            "gaussian" => KernelFamily::Gaussian,
            "box" => KernelFamily::Box,
            "radial" => KernelFamily::Radial,
            "bokeh" => KernelFamily::Bokeh,
            "identity" | "none" => KernelFamily::Identity,
            _ => {
                return Err(Error::Unknown {
                    kind: "kernel family",
                    name: s.to_string(),
                })
            }
        })
    }
}

/// A square, odd-sized, non-negative, unit-mass convolution kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurKernel {
    family: KernelFamily,
    size: usize,
    /// Row-major, `size * size` entries.
    weights: Vec<f64>,
    severity_b: f64,
}

impl BlurKernel {
    /// Builds a kernel from raw weights, normalizing to unit mass.
    pub fn from_weights(
        family: KernelFamily,
        size: usize,
        mut weights: Vec<f64>,
        severity_b: f64,
    ) -> Result<Self> {
        check_size(size)?;
        if weights.len() != size * size {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for a {size}x{size} kernel",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights", "must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("weights", "kernel has no mass"));
        }
        for w in &mut weights {
            *w /= sum;
        }
        if !(0.0..=1.0).contains(&severity_b) {
            return Err(Error::invalid("severity_b", format!("{severity_b} outside [0, 1]")));
        }
        Ok(Self {
            family,
            size,
            weights,
            severity_b,
        })
    }

    pub fn identity() -> Self {
        Self {
            family: KernelFamily::Identity,
            size: 1,
            weights: vec![1.0],
            severity_b: 0.0,
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at `(col, row)` of the kernel window.
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    pub fn severity(&self) -> f64 {
        self.severity_b
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// True when all mass sits in the central bin.
    pub fn is_delta(&self) -> bool {
        let c = self.radius();
        (self.at(c, c) - 1.0).abs() <= MASS_TOLERANCE
    }

    /// Checks the type invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        check_size(self.size)?;
        if self.weights.len() != self.size * self.size {
            return Err(Error::ShapeMismatch("kernel weight count".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights", "must be finite and non-negative"));
        }
        if (self.mass() - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid("weights", format!("mass {} is not 1", self.mass())));
        }
        if self.family == KernelFamily::Identity && !self.is_delta() {
            return Err(Error::invalid("weights", "identity kernel must be a delta"));
        }
        Ok(())
    }

    /// Non-zero taps as `(dx, dy, weight)` offsets from the center.
    pub fn taps(&self) -> Vec<(isize, isize, f64)> {
        let r = self.radius() as isize;
        let mut out = Vec::new();
        for row in 0..self.size {
            for col in 0..self.size {
                let w = self.at(col, row);
                if w > 0.0 {
                    out.push((col as isize - r, row as isize - r, w));
                }
            }
        }
        out
    }
}

fn check_size(size: usize) -> Result<()> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::invalid("kernel_size", format!("{size} must be odd and >= 1")));
    }
    Ok(())
}

/// Smallest odd window holding a family kernel with this parameter.
pub fn auto_kernel_size(family: KernelFamily, param: f64) -> usize {
    let odd = |n: usize| if n.is_multiple_of(2) { n + 1 } else { n };
    match family {
        KernelFamily::Gaussian => 2 * (3.0 * param).ceil().max(0.0) as usize + 1,
        KernelFamily::Box => odd(param.ceil().max(1.0) as usize),
        KernelFamily::Bokeh => 2 * param.floor().max(0.0) as usize + 1,
        KernelFamily::Defocus => 2 * (2.0 * param).floor().max(0.0) as usize + 1,
        KernelFamily::MotionPsf => odd(param.ceil().max(0.0) as usize + 2),
        KernelFamily::Radial | KernelFamily::Identity => 1,
    }
}

/// Unit-mass kernel of a parametric family.
///
/// `param` is σ for gaussian and defocus, the side length for box and the
/// radius for bokeh. Defocus is a uniform disc of radius `2σ`. Radial blur
/// is spatially varying and has no kernel; use [`super::radial_blur`].
pub fn parametric_kernel(family: KernelFamily, param: f64, kernel_size: usize) -> Result<BlurKernel> {
    check_size(kernel_size)?;
    if !param.is_finite() {
        return Err(Error::invalid("param", "must be finite"));
    }
    let r = (kernel_size / 2) as f64;
    let grid = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        let mut w = Vec::with_capacity(kernel_size * kernel_size);
        for row in 0..kernel_size {
            for col in 0..kernel_size {
                w.push(f(col as f64 - r, row as f64 - r));
            }
        }
        w
    };
    let severity = family.severity(param);
    match family {
        KernelFamily::Identity => Ok(BlurKernel::identity()),
        KernelFamily::Gaussian => {
            if param <= 0.0 {
                return Err(Error::invalid("param", "gaussian sigma must be > 0"));
            }
            let inv = 1.0 / (2.0 * param * param);
            let w = grid(&|x, y| (-(x * x + y * y) * inv).exp());
            BlurKernel::from_weights(family, kernel_size, w, severity)
        }
        KernelFamily::Box => {
            if param < 1.0 {
                return Err(Error::invalid("param", "box width must be >= 1"));
            }
            let half = param / 2.0;
            let cover = |t: f64| ((t + 0.5).min(half) - (t - 0.5).max(-half)).max(0.0);
            let w = grid(&|x, y| cover(x) * cover(y));
            BlurKernel::from_weights(family, kernel_size, w, severity)
        }
        KernelFamily::Bokeh | KernelFamily::Defocus => {
            let radius = if family == KernelFamily::Bokeh {
                if param < 1.0 {
                    return Err(Error::invalid("param", "bokeh radius must be >= 1"));
                }
                param
            } else {
                if param <= 0.0 {
                    return Err(Error::invalid("param", "defocus sigma must be > 0"));
                }
                2.0 * param
            };
            let r2 = radius * radius;
            let w = grid(&|x, y| if x * x + y * y <= r2 { 1.0 } else { 0.0 });
            BlurKernel::from_weights(family, kernel_size, w, severity)
        }
        KernelFamily::MotionPsf => Err(Error::invalid(
            "family",
            "motion kernels come from trajectories; use motion_line or rasterize_psf",
        )),
        KernelFamily::Radial => Err(Error::invalid(
            "family",
            "radial blur is spatially varying and has no convolution kernel",
        )),
    }
}
