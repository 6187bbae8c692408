//! Blur synthesis: motion PSFs from camera-shake trajectories, parametric
//! evaluation kernels, co-degradations, and paired sharp/blurred samples.

mod convolve;
mod degrade;
mod kernel;
mod pairs;
mod trajectory;

pub use convolve::{convolve, convolve_plane};
pub use degrade::{add_sensor_noise, down_up_sample, jpeg_degrade, radial_blur, RADIAL_COPIES};
pub use kernel::{auto_kernel_size, parametric_kernel, BlurKernel, KernelFamily, MASS_TOLERANCE};
pub use pairs::{
    apply_ccmba, feather_alpha, random_ellipse_mask, synthesize_pair, BlurMode, BlurPolicy,
    DegradationRecord, PairedSample, FEATHER_PX,
};
pub use trajectory::{motion_line, rasterize_psf, sample_trajectory, Trajectory};
