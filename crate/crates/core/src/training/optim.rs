use ndarray::Zip;

use crate::error::{Error, Result};
use crate::heads::{HeadGrads, HeadStack, Linear};

/// `base_lr * (1 + cos(pi * step / total_steps)) / 2`, no warmup.
pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::invalid("step", format!("{step} > total_steps {total_steps}")));
    }
    if total_steps == 0 {
        return Ok(base_lr);
    }
    let t = step as f64 / total_steps as f64;
    Ok(base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments, laid out like the head's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Linear>,
    pub v: Vec<Linear>,
}

impl AdamState {
    pub fn zeros_like(head: &HeadStack) -> Self {
        let zeros: Vec<Linear> = head
            .layers()
            .iter()
            .map(|l| Linear::zeros(l.weight.ncols(), l.weight.nrows()))
            .collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn matches(&self, head: &HeadStack) -> bool {
        let same = |a: &[Linear]| {
            a.len() == head.layers().len()
                && a.iter()
                    .zip(head.layers())
                    .all(|(x, l)| x.weight.dim() == l.weight.dim() && x.bias.len() == l.bias.len())
        };
        same(&self.m) && same(&self.v)
    }
}

/// Decoupled weight decay followed by a bias-corrected Adam update.
pub fn adamw_step(head: &mut HeadStack, grads: &HeadGrads, state: &mut AdamState, lr: f64, weight_decay: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (((layer, g), m), v) in head
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *p -= lr * weight_decay * *p;
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        };
        Zip::from(&mut layer.weight)
            .and(&g.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(update);
        Zip::from(&mut layer.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(update);
    }
}

/// Rescales `grads` to at most `max_norm`; returns the pre-clip norm and
/// whether clipping fired.
pub fn clip_global_norm(grads: &mut HeadGrads, max_norm: f64) -> (f64, bool) {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
        (norm, true)
    } else {
        (norm, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 1e-4).unwrap(), 1e-4);
        assert!(cosine_lr(100, 100, 1e-4).unwrap().abs() < 1e-20);
        assert!((cosine_lr(50, 100, 1e-4).unwrap() - 5e-5).abs() < 1e-18);
        assert!(cosine_lr(101, 100, 1e-4).is_err());
    }
}
