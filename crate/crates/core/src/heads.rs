//! Projection + classifier head stacks with manual backpropagation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{gelu, gelu_grad};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Teacher,
    Student,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Teacher => "teacher",
            Role::Student => "student",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub role: Role,
    pub input_dim: usize,
    /// Output widths of the projection layers; the last one is `k`.
    pub projection_dims: Vec<usize>,
    pub classifier_hidden: usize,
    pub dropout: f64,
}

impl HeadConfig {
    /// Role defaults. For `d >= 512` the teacher projects
    /// `d -> max(2048, 4d) -> 1024 -> 512` and the student `d -> 1024 -> 512`;
    /// smaller encoders keep the ratios: teacher `d -> 4d -> 2d -> d`, student
    /// `d -> 2d -> d`. The classifier hidden width is `k / 2`.
    pub fn for_role(role: Role, input_dim: usize) -> Self {
        let d = input_dim;
        let (projection_dims, dropout) = match (role, d >= 512) {
            (Role::Teacher, true) => (vec![2048.max(4 * d), 1024, 512], 0.1),
            (Role::Student, true) => (vec![1024, 512], 0.2),
            (Role::Teacher, false) => (vec![4 * d, 2 * d, d], 0.1),
            (Role::Student, false) => (vec![2 * d, d], 0.2),
        };
        let k = *projection_dims.last().unwrap();
        Self {
            role,
            input_dim,
            projection_dims,
            classifier_hidden: (k / 2).max(1),
            dropout,
        }
    }

    pub fn projection_dim(&self) -> usize {
        *self.projection_dims.last().expect("validated")
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.projection_dims.is_empty() || self.classifier_hidden == 0 {
            return Err(Error::invalid("heads", "dimensions must be positive and non-empty"));
        }
        if self.projection_dims.contains(&0) {
            return Err(Error::invalid("projection_dims", "zero width layer"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout", format!("{} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// `(in, out)` per layer: projection layers, then the two classifier
    /// layers.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut prev = self.input_dim;
        for &w in &self.projection_dims {
            shapes.push((prev, w));
            prev = w;
        }
        shapes.push((prev, self.classifier_hidden));
        shapes.push((self.classifier_hidden, 2));
        shapes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weight: Array2::zeros((n_out, n_in)),
            bias: Array1::zeros(n_out),
        }
    }
}

/// Projection head followed by a two-layer GELU classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadStack {
    config: HeadConfig,
    layers: Vec<Linear>,
}

/// Per-layer gradients, same layout as the stack's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrads {
    pub layers: Vec<Linear>,
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutput {
    /// Projection output, `N x k`.
    pub z: Array2<f64>,
    /// Raw logits, `N x 2`.
    pub logits: Array2<f64>,
}

impl HeadStack {
    /// Gaussian init with std `1/sqrt(fan_in)`; zero biases.
    pub fn init<R: Rng + ?Sized>(config: HeadConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(n_in, n_out)| {
                let dist = Normal::new(0.0, 1.0 / (n_in as f64).sqrt()).unwrap();
                Linear {
                    weight: Array2::from_shape_fn((n_out, n_in), |_| dist.sample(rng)),
                    bias: Array1::zeros(n_out),
                }
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn from_layers(config: HeadConfig, layers: Vec<Linear>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len()
            || shapes
                .iter()
                .zip(&layers)
                .any(|(&(i, o), l)| l.weight.dim() != (o, i) || l.bias.len() != o)
        {
            return Err(Error::ShapeMismatch("layers do not match head config".into()));
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn role(&self) -> Role {
        self.config.role
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Hex SHA-256 over every parameter.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.layers {
            for v in l.weight.iter().chain(l.bias.iter()) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn n_projection(&self) -> usize {
        self.config.projection_dims.len()
    }

    /// Whether layer `i` is followed by GELU + dropout.
    fn activated(&self, i: usize) -> bool {
        i + 1 != self.n_projection() && i + 1 != self.layers.len()
    }

    /// Batched forward pass. Dropout is active only when `dropout_rng` is
    /// given.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        h: ArrayView2<f64>,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(HeadOutput, ForwardCache)> {
        if h.ncols() != self.config.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "feature width {} vs head input {}",
                h.ncols(),
                self.config.input_dim
            )));
        }
        let p = self.config.dropout;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut x = h.to_owned();
        let mut z = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let a = x.dot(&layer.weight.t()) + &layer.bias;
            cache.inputs.push(x);
            let (next, mask) = if self.activated(i) {
                let mut g = a.mapv(gelu);
                let mask = match dropout_rng.as_deref_mut() {
                    Some(r) if p > 0.0 => {
                        let keep = 1.0 / (1.0 - p);
                        let m = Array2::from_shape_fn(g.dim(), |_| {
                            if r.random::<f64>() < p {
                                0.0
                            } else {
                                keep
                            }
                        });
                        g *= &m;
                        Some(m)
                    }
                    _ => None,
                };
                (g, mask)
            } else {
                (a.clone(), None)
            };
            cache.pre.push(a);
            cache.masks.push(mask);
            if i + 1 == self.n_projection() {
                z = Some(next.clone());
            }
            x = next;
        }
        Ok((
            HeadOutput {
                z: z.expect("projection has at least one layer"),
                logits: x,
            },
            cache,
        ))
    }

    /// Backpropagates `dL/dz` and `dL/du` to parameter gradients.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_z: Option<ArrayView2<f64>>,
        grad_logits: ArrayView2<f64>,
    ) -> HeadGrads {
        let mut grads: Vec<Linear> = self
            .layers
            .iter()
            .map(|l| Linear::zeros(l.weight.ncols(), l.weight.nrows()))
            .collect();
        let mut g = grad_logits.to_owned();
        for i in (0..self.layers.len()).rev() {
            if i + 1 == self.n_projection() {
                if let Some(gz) = grad_z {
                    g += &gz;
                }
            }
            if self.activated(i) {
                if let Some(m) = &cache.masks[i] {
                    g *= m;
                }
                g.zip_mut_with(&cache.pre[i], |gv, &a| *gv *= gelu_grad(a));
            }
            grads[i].weight = g.t().dot(&cache.inputs[i]);
            grads[i].bias = g.sum_axis(Axis(0));
            if i > 0 {
                g = g.dot(&self.layers[i].weight);
            }
        }
        HeadGrads { layers: grads }
    }

    /// Single-vector inference: `(z, u)`.
    pub fn project_and_classify<R: Rng + ?Sized>(
        &self,
        h: ArrayView1<f64>,
        dropout_rng: Option<&mut R>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let batch = h.insert_axis(Axis(0));
        let (out, _) = self.forward(batch, dropout_rng)?;
        Ok((out.z.row(0).to_owned(), out.logits.row(0).to_owned()))
    }

    /// Inference without dropout.
    pub fn infer(&self, h: ArrayView2<f64>) -> Result<HeadOutput> {
        Ok(self.forward::<rand_chacha::ChaCha8Rng>(h, None)?.0)
    }
}

impl HeadGrads {
    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.iter().chain(l.bias.iter()).map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weight *= c;
            l.bias *= c;
        }
    }
}

/// `z / ||z||`; errors on a zero or non-finite vector.
pub fn normalize(z: ArrayView1<f64>) -> Result<Array1<f64>> {
    let n = z.dot(&z).sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Numerical("cannot normalize a zero-norm vector".into()));
    }
    Ok(z.mapv(|v| v / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    fn stack(role: Role) -> HeadStack {
        let cfg = HeadConfig {
            role,
            input_dim: 6,
            projection_dims: vec![10, 8, 4],
            classifier_hidden: 3,
            dropout: 0.1,
        };
        HeadStack::init(cfg, &mut rng::stream(7, &[])).unwrap()
    }

    #[test]
    fn role_defaults() {
        let t = HeadConfig::for_role(Role::Teacher, 4096);
        assert_eq!(t.projection_dims, vec![16384, 1024, 512]);
        let t = HeadConfig::for_role(Role::Teacher, 512);
        assert_eq!(t.projection_dims, vec![2048, 1024, 512]);
        assert_eq!(t.dropout, 0.1);
        let s = HeadConfig::for_role(Role::Student, 768);
        assert_eq!(s.projection_dims, vec![1024, 512]);
        assert_eq!(s.dropout, 0.2);
        let small = HeadConfig::for_role(Role::Teacher, 64);
        assert_eq!(small.projection_dims, vec![256, 128, 64]);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let s = stack(Role::Teacher);
        let h = array![0.3, -1.0, 2.0, 0.0, 0.5, 0.1];
        let a = s.project_and_classify::<rng::Rng>(h.view(), None).unwrap();
        let b = s.project_and_classify::<rng::Rng>(h.view(), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.len(), 4);
        assert_eq!(a.1.len(), 2);
    }

    #[test]
    fn zero_final_layer_outputs_bias() {
        let mut s = stack(Role::Student);
        let last = s.layers_mut().last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias = array![0.25, -0.5];
        for seed in 0..5u64 {
            let mut r = rng::stream(seed, &[]);
            let h = Array1::from_shape_fn(6, |_| r.random::<f64>() * 10.0 - 5.0);
            let (_, u) = s.project_and_classify::<rng::Rng>(h.view(), None).unwrap();
            assert_eq!(u, array![0.25, -0.5]);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let s = stack(Role::Teacher);
        let h = array![1.0, 2.0];
        assert!(s.project_and_classify::<rng::Rng>(h.view(), None).is_err());
    }

    #[test]
    fn finite_for_large_inputs() {
        let cfg = HeadConfig::for_role(Role::Teacher, 32);
        let s = HeadStack::init(cfg, &mut rng::stream(1, &[])).unwrap();
        let mut r = rng::stream(2, &[]);
        for _ in 0..50 {
            let raw = Array1::from_shape_fn(32, |_| r.random::<f64>() - 0.5);
            let h = &raw * (1e3 / raw.dot(&raw).sqrt());
            let (z, u) = s.project_and_classify::<rng::Rng>(h.view(), None).unwrap();
            assert!(z.iter().chain(u.iter()).all(|v| v.is_finite()));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let s = stack(Role::Teacher);
        let mut r = rng::stream(3, &[]);
        let h = Array2::from_shape_fn((3, 6), |_| r.random::<f64>() * 2.0 - 1.0);
        let wz = Array2::from_shape_fn((3, 4), |_| r.random::<f64>() - 0.5);
        let wu = Array2::from_shape_fn((3, 2), |_| r.random::<f64>() - 0.5);
        let objective = |st: &HeadStack| {
            let o = st.infer(h.view()).unwrap();
            (&o.z * &wz).sum() + (&o.logits * &wu).sum()
        };
        let (_, cache) = s.forward::<rng::Rng>(h.view(), None).unwrap();
        let g = s.backward(&cache, Some(wz.view()), wu.view());
        let eps = 1e-5;
        for li in 0..s.layers().len() {
            for idx in [(0usize, 0usize), (1, 2)] {
                if idx.0 >= s.layers()[li].weight.nrows() || idx.1 >= s.layers()[li].weight.ncols() {
                    continue;
                }
                let mut p = s.clone();
                p.layers_mut()[li].weight[idx] += eps;
                let mut m = s.clone();
                m.layers_mut()[li].weight[idx] -= eps;
                let fd = (objective(&p) - objective(&m)) / (2.0 * eps);
                let an = g.layers[li].weight[idx];
                assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "layer {li} {idx:?}: {fd} vs {an}");
            }
            let mut p = s.clone();
            p.layers_mut()[li].bias[0] += eps;
            let mut m = s.clone();
            m.layers_mut()[li].bias[0] -= eps;
            let fd = (objective(&p) - objective(&m)) / (2.0 * eps);
            assert!((fd - g.layers[li].bias[0]).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn normalize_cases() {
        let n = normalize(array![3.0, 4.0].view()).unwrap();
        assert!((n[0] - 0.6).abs() < 1e-15 && (n[1] - 0.8).abs() < 1e-15);
        let u = array![0.0, 1.0, 0.0];
        assert_eq!(normalize(u.view()).unwrap(), u);
        assert!(normalize(array![0.0, 0.0].view()).is_err());
    }
}
