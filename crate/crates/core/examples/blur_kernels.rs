//! Every kernel family at a mid-range parameter, then one synthesized
//! sharp/blurred pair per blur mode.
//!
//! ```text
//! cargo run --example blur_kernels
//! ```

use sharpblur::blur::{auto_kernel_size, motion_line, parametric_kernel, synthesize_pair, BlurMode, BlurPolicy, KernelFamily};
use sharpblur::data::{toy_dataset, ToyConfig};

pub struct KernelRow {
    pub family: KernelFamily,
    pub param: f64,
    pub size: usize,
    pub mass: f64,
    pub severity: f64,
}

pub struct PairRow {
    pub mode: BlurMode,
    pub severity: f64,
    pub length: f64,
    pub mean_abs_change: f64,
}

pub fn run_example(seed: u64) -> sharpblur::Result<(Vec<KernelRow>, Vec<PairRow>)> {
    let mut kernels = Vec::new();
    for family in KernelFamily::ALL {
        if family == KernelFamily::Radial {
            continue;
        }
        let param = if family == KernelFamily::Identity { 0.0 } else { family.max_param() / 2.0 };
        let size = auto_kernel_size(family, param);
        let k = match family {
            KernelFamily::MotionPsf => motion_line(param, 0.0, size, family.max_param())?,
            _ => parametric_kernel(family, param, size)?,
        };
        kernels.push(KernelRow { family, param, size: k.size(), mass: k.mass(), severity: k.severity() });
    }

    let ds = toy_dataset(&ToyConfig { n_per_class: 10, size: 48, seed })?;
    let sample = &ds.samples()[0];
    let mut pairs = Vec::new();
    for mode in [BlurMode::Global, BlurMode::Ccmba] {
        let policy = BlurPolicy { mode, ..BlurPolicy::default() };
        let mut rng = sharpblur::rng::stream(seed, &[sharpblur::rng::tag("blur-kernels")]);
        let pair = synthesize_pair(&sample.image, sample.label, &policy, sample.mask.as_ref(), &mut rng)?;
        let diff = pair.sharp.as_slice().iter().zip(pair.blurred.as_slice()).map(|(a, b)| (a - b).abs() as f64);
        pairs.push(PairRow {
            mode: pair.degradation.mode,
            severity: pair.degradation.severity(),
            length: pair.degradation.length,
            mean_abs_change: diff.sum::<f64>() / pair.sharp.as_slice().len() as f64,
        });
    }
    Ok((kernels, pairs))
}

fn main() -> sharpblur::Result<()> {
    let (kernels, pairs) = run_example(0)?;
    for k in &kernels {
        println!("{:>10}  param {:>5.2}  size {:>2}  mass {:.6}  severity {:.2}", k.family.name(), k.param, k.size, k.mass, k.severity);
    }
    for p in &pairs {
        println!("{:?}: length {:.2}  severity {:.2}  mean |change| {:.4}", p.mode, p.length, p.severity, p.mean_abs_change);
    }
    Ok(())
}
