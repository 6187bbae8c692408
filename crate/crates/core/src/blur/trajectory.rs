//! Camera-shake trajectories and their rasterized point-spread functions.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::kernel::{BlurKernel, KernelFamily};
use crate::error::{Error, Result};

/// Sub-pixel step used when splatting a polyline into the kernel grid.
const SPLAT_STEP: f64 = 0.05;

/// A polyline in pixel units starting at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<[f64; 2]>,
    length: f64,
    direction: f64,
}

impl Trajectory {
    pub fn new(points: Vec<[f64; 2]>, length: f64, direction: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("points", "trajectory needs at least one point"));
        }
        if !(length >= 0.0 && length.is_finite()) {
            return Err(Error::invalid("length", format!("{length} must be finite and >= 0")));
        }
        if !(0.0..PI).contains(&direction) {
            return Err(Error::invalid("direction", format!("{direction} outside [0, pi)")));
        }
        if length == 0.0 && points.len() != 1 {
            return Err(Error::invalid("points", "zero-length trajectory must be a single point"));
        }
        let t = Self {
            points,
            length,
            direction,
        };
        let arc = t.arc_length();
        if length > 0.0 && ((arc - length) / length).abs() > 0.01 {
            return Err(Error::invalid(
                "points",
                format!("arc length {arc} disagrees with length {length}"),
            ));
        }
        Ok(t)
    }

    /// Straight segment of `length` pixels centered on the origin.
    pub fn line(length: f64, direction: f64) -> Result<Self> {
        let direction = direction.rem_euclid(PI);
        if length == 0.0 {
            return Self::new(vec![[0.0, 0.0]], 0.0, direction);
        }
        let (s, c) = direction.sin_cos();
        let h = length / 2.0;
        Self::new(vec![[-h * c, -h * s], [h * c, h * s]], length, direction)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn direction(&self) -> f64 {
        self.direction
    }

    pub fn arc_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum()
    }
}

/// Random-walk camera-shake trajectory.
///
/// Length is uniform on `[0, l_max)` and the initial heading uniform on
/// `[0, pi)`. The walk takes unit steps (the last one fractional) and each
/// step after the first turns by a zero-mean Gaussian angle of std
/// `jitter_std`.
pub fn sample_trajectory<R: Rng + ?Sized>(rng: &mut R, l_max: f64, jitter_std: f64) -> Result<Trajectory> {
    if !(l_max > 0.0 && l_max.is_finite()) {
        return Err(Error::invalid("l_max", format!("{l_max} must be positive")));
    }
    if !(jitter_std >= 0.0 && jitter_std.is_finite()) {
        return Err(Error::invalid("jitter_std", format!("{jitter_std} must be >= 0")));
    }
    let length = rng.random::<f64>() * l_max;
    let direction = rng.random::<f64>() * PI;
    let jitter = Normal::new(0.0, jitter_std).expect("validated std");

    let mut points = vec![[0.0, 0.0]];
    let mut heading = direction;
    let mut remaining = length;
    let mut first = true;
    while remaining > 0.0 {
        if !first {
            heading += jitter.sample(rng);
        }
        first = false;
        let step = remaining.min(1.0);
        let [x, y] = *points.last().unwrap();
        points.push([x + step * heading.cos(), y + step * heading.sin()]);
        remaining -= step;
    }
    Trajectory::new(points, length, direction)
}

/// Splats the trajectory into a `kernel_size` window and normalizes to unit
/// mass.
///
/// The bounding box of the path is centered on the window. Mass falling
/// outside the window is dropped before normalization. Severity is
/// `length / l_max`, clamped to `[0, 1]`.
pub fn rasterize_psf(traj: &Trajectory, kernel_size: usize, l_max: f64) -> Result<BlurKernel> {
    if kernel_size == 0 || kernel_size.is_multiple_of(2) {
        return Err(Error::invalid("kernel_size", format!("{kernel_size} must be odd and >= 1")));
    }
    if !(l_max > 0.0) {
        return Err(Error::invalid("l_max", "must be positive"));
    }
    let pts = traj.points();
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    let c = (kernel_size / 2) as f64;
    let off_x = c - (min_x + max_x) / 2.0;
    let off_y = c - (min_y + max_y) / 2.0;

    let mut w = vec![0.0; kernel_size * kernel_size];
    let mut splat = |x: f64, y: f64, mass: f64| {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        for (dx, dy, f) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            if f <= 0.0 {
                continue;
            }
            let xi = x0 as i64 + dx;
            let yi = y0 as i64 + dy;
            if xi >= 0 && yi >= 0 && (xi as usize) < kernel_size && (yi as usize) < kernel_size {
                w[yi as usize * kernel_size + xi as usize] += mass * f;
            }
        }
    };

    if pts.len() == 1 || traj.arc_length() == 0.0 {
        splat(pts[0][0] + off_x, pts[0][1] + off_y, 1.0);
    } else {
        for seg in pts.windows(2) {
            let (ax, ay) = (seg[0][0] + off_x, seg[0][1] + off_y);
            let (bx, by) = (seg[1][0] + off_x, seg[1][1] + off_y);
            let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
            if len == 0.0 {
                continue;
            }
            let n = (len / SPLAT_STEP).ceil().max(1.0) as usize;
            let piece = len / n as f64;
            for i in 0..n {
                let t = (i as f64 + 0.5) / n as f64;
                splat(ax + t * (bx - ax), ay + t * (by - ay), piece);
            }
        }
    }

    let severity = (traj.length() / l_max).clamp(0.0, 1.0);
    BlurKernel::from_weights(KernelFamily::MotionPsf, kernel_size, w, severity)
}

/// Straight-line motion PSF of the given length and angle, with severity
/// relative to `l_max`.
pub fn motion_line(length: f64, direction: f64, kernel_size: usize, l_max: f64) -> Result<BlurKernel> {
    if !(length >= 0.0) {
        return Err(Error::invalid("length", "must be >= 0"));
    }
    rasterize_psf(&Trajectory::line(length, direction)?, kernel_size, l_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn tiny_l_max_gives_point_like_path() {
        let mut r = rng::stream(1, &[]);
        let t = sample_trajectory(&mut r, 0.001, 0.0).unwrap();
        assert!(t.length() < 0.001);
        assert!(t.arc_length() < 0.001);
    }

    #[test]
    fn zero_jitter_is_collinear() {
        let mut r = rng::stream(2, &[]);
        for _ in 0..50 {
            let t = sample_trajectory(&mut r, 15.0, 0.0).unwrap();
            let p = t.points();
            if p.len() < 3 {
                continue;
            }
            let (dx, dy) = (p[1][0] - p[0][0], p[1][1] - p[0][1]);
            for q in &p[2..] {
                let cross = dx * (q[1] - p[0][1]) - dy * (q[0] - p[0][0]);
                assert!(cross.abs() < 1e-9, "cross {cross}");
            }
        }
    }

    #[test]
    fn arc_length_matches_length() {
        let mut r = rng::stream(3, &[]);
        for _ in 0..200 {
            let t = sample_trajectory(&mut r, 21.0, 0.3).unwrap();
            assert!((t.arc_length() - t.length()).abs() <= 0.01 * t.length().max(1e-12));
            assert!((0.0..PI).contains(&t.direction()));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut r = rng::stream(4, &[]);
        assert!(sample_trajectory(&mut r, 0.0, 0.1).is_err());
        assert!(sample_trajectory(&mut r, -3.0, 0.1).is_err());
        let t = Trajectory::line(3.0, 0.0).unwrap();
        assert!(rasterize_psf(&t, 6, 15.0).is_err());
    }

    #[test]
    fn zero_length_is_a_delta() {
        let t = Trajectory::line(0.0, 0.3).unwrap();
        let k = rasterize_psf(&t, 7, 15.0).unwrap();
        assert!((k.at(3, 3) - 1.0).abs() < 1e-12);
        assert_eq!(k.family(), KernelFamily::MotionPsf);
    }

    #[test]
    fn horizontal_line_stays_in_central_row() {
        let t = Trajectory::line(5.0, 0.0).unwrap();
        let k = rasterize_psf(&t, 7, 15.0).unwrap();
        for row in 0..7 {
            for col in 0..7 {
                if row != 3 {
                    assert_eq!(k.at(col, row), 0.0);
                }
            }
        }
        assert!((k.mass() - 1.0).abs() < 1e-12);
        assert!((k.severity() - 5.0 / 15.0).abs() < 1e-12);
    }
}
