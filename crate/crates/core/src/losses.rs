//! Training objectives and their analytic gradients.
//!
//! Every loss is a mean over its batch and returns the gradient with respect
//! to the trainable side of its inputs. Teacher-side inputs are treated as
//! constants.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_cls: f64,
    pub lambda_feat: f64,
    pub lambda_kd: f64,
    pub lambda_ordcon: f64,
    /// KD temperature `T`.
    pub temperature: f64,
    /// Contrastive temperature `tau`.
    pub tau: f64,
    /// Per-class focal weights, indexed by class (real, fake).
    pub alpha_focal: [f64; 2],
    pub gamma_focal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cls: 1.0,
            lambda_feat: 0.5,
            lambda_kd: 1.0,
            lambda_ordcon: 0.5,
            temperature: 2.0,
            tau: 0.1,
            alpha_focal: [1.0, 1.0],
            gamma_focal: 2.0,
        }
    }
}

impl LossWeights {
    pub fn only(cls: f64, feat: f64, kd: f64, ordcon: f64) -> Self {
        Self {
            lambda_cls: cls,
            lambda_feat: feat,
            lambda_kd: kd,
            lambda_ordcon: ordcon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_cls,
            self.lambda_feat,
            self.lambda_kd,
            self.lambda_ordcon,
            self.temperature,
            self.tau,
            self.alpha_focal[0],
            self.alpha_focal[1],
            self.gamma_focal,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("loss weights", "must be finite and non-negative"));
        }
        if self.temperature <= 0.0 {
            return Err(Error::invalid("temperature", "must be > 0"));
        }
        if self.tau <= 0.0 {
            return Err(Error::invalid("tau", "must be > 0"));
        }
        Ok(())
    }
}

/// A scalar loss and its gradient with respect to the trainable input.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

/// Per-term values and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub feat: f64,
    pub kd: f64,
    pub ordcon: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.cls, self.feat, self.kd, self.ordcon, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn log_softmax(row: ArrayView1<f64>) -> Array1<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.mapv(|v| v - lse)
}

fn check_rows(a: &ArrayView2<f64>, b: &ArrayView2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!("{what}: empty batch")));
    }
    Ok(())
}

/// Mean over the batch of `-alpha_c (1 - p_c)^gamma log p_c` at the true
/// class `c`, with `p = softmax(logits)`.
pub fn focal_loss(logits: ArrayView2<f64>, labels: &[usize], alpha: [f64; 2], gamma: f64) -> Result<LossGrad> {
    let n = logits.nrows();
    if n == 0 || labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{n} logit rows vs {} labels", labels.len())));
    }
    if logits.ncols() != 2 {
        return Err(Error::ShapeMismatch("focal loss expects two logits per row".into()));
    }
    if gamma < 0.0 {
        return Err(Error::invalid("gamma", "must be >= 0"));
    }
    let mut value = 0.0;
    let mut grad = Array2::zeros(logits.dim());
    for (i, (row, &c)) in logits.rows().into_iter().zip(labels).enumerate() {
        if c > 1 {
            return Err(Error::invalid("labels", format!("label {c} at row {i} is not 0 or 1")));
        }
        let logp = log_softmax(row);
        let p = logp.mapv(f64::exp);
        let log_pc = logp[c];
        let pc = p[c];
        // 1 - p_c without cancellation
        let rest: f64 = p.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, v)| v).sum();
        let a = alpha[c];
        let weight = if gamma == 0.0 { 1.0 } else { rest.powf(gamma) };
        value += -a * weight * log_pc;

        let focus = if gamma == 0.0 || rest == 0.0 {
            0.0
        } else {
            gamma * rest.powf(gamma - 1.0) * pc * log_pc
        };
        let coeff = a * (focus - weight);
        for j in 0..2 {
            let delta = if j == c { 1.0 } else { 0.0 };
            grad[[i, j]] = coeff * (delta - p[j]) / n as f64;
        }
    }
    Ok(LossGrad {
        value: value / n as f64,
        grad,
    })
}

/// `1 - mean_i cos(f_s[i], f_t[i])`; gradient is with respect to `f_s`.
pub fn feature_alignment_loss(f_s: ArrayView2<f64>, f_t: ArrayView2<f64>) -> Result<LossGrad> {
    check_rows(&f_s, &f_t, "feature alignment")?;
    let n = f_s.nrows() as f64;
    let mut cos_sum = 0.0;
    let mut grad = Array2::zeros(f_s.dim());
    for (i, (s, t)) in f_s.rows().into_iter().zip(f_t.rows()).enumerate() {
        let ns = s.dot(&s).sqrt();
        let nt = t.dot(&t).sqrt();
        if !(ns > 0.0 && nt > 0.0) {
            return Err(Error::Numerical(format!("zero-norm feature row {i}")));
        }
        let cos = s.dot(&t) / (ns * nt);
        cos_sum += cos;
        let g = (&t / (ns * nt) - &(&s * (cos / (ns * ns)))) * (-1.0 / n);
        grad.row_mut(i).assign(&g);
    }
    Ok(LossGrad {
        value: 1.0 - cos_sum / n,
        grad,
    })
}

/// `T^2 * mean_i KL(softmax(u_t/T) || softmax(u_s/T))`; the teacher
/// distribution is the fixed reference and the gradient is with respect to
/// the student logits only.
pub fn kd_loss(u_teacher: ArrayView2<f64>, u_student: ArrayView2<f64>, temperature: f64) -> Result<LossGrad> {
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature", format!("{temperature} must be > 0")));
    }
    check_rows(&u_teacher, &u_student, "kd")?;
    let n = u_teacher.nrows() as f64;
    let t = temperature;
    let mut value = 0.0;
    let mut grad = Array2::zeros(u_student.dim());
    for (i, (ut, us)) in u_teacher.rows().into_iter().zip(u_student.rows()).enumerate() {
        let lq = log_softmax((&ut / t).view());
        let lr = log_softmax((&us / t).view());
        let q = lq.mapv(f64::exp);
        let r = lr.mapv(f64::exp);
        value += q.iter().zip(lq.iter().zip(lr.iter())).map(|(qi, (a, b))| qi * (a - b)).sum::<f64>();
        grad.row_mut(i).assign(&((&r - &q) * (t / n)));
    }
    Ok(LossGrad {
        value: t * t * value / n,
        grad,
    })
}

/// Ordinal contrastive loss over `M` embeddings with blur levels `b`.
///
/// For each anchor `i` and each `j != i`, the term is
/// `-log(exp(s_ij/tau) / sum_k exp(s_ik/tau))` where `k != i` ranges over
/// views with `|b_i - b_k| >= |b_i - b_j|` (so `j` is always included) and
/// `s` is cosine similarity. Terms are averaged over `j` (dividing by
/// `M - 1`) and then over anchors. Rows are normalized internally; the
/// gradient is with respect to the raw rows.
pub fn ordinal_contrastive_loss(
    embeddings: ArrayView2<f64>,
    blur_levels: &[f64],
    anchors: &[usize],
    tau: f64,
) -> Result<LossGrad> {
    let m = embeddings.nrows();
    if m < 2 {
        return Err(Error::invalid("embeddings", format!("need at least 2 views, got {m}")));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("{tau} must be > 0")));
    }
    if blur_levels.len() != m {
        return Err(Error::ShapeMismatch(format!("{m} embeddings vs {} blur levels", blur_levels.len())));
    }
    if anchors.is_empty() || anchors.iter().any(|&a| a >= m) {
        return Err(Error::invalid("anchors", "must be non-empty valid row indices"));
    }

    let norms: Vec<f64> = embeddings.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some(i) = norms.iter().position(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(Error::Numerical(format!("zero-norm embedding row {i}")));
    }
    let mut unit = embeddings.to_owned();
    for (mut row, &n) in unit.rows_mut().into_iter().zip(&norms) {
        row /= n;
    }
    let sim = unit.dot(&unit.t());

    let scale = 1.0 / (anchors.len() as f64 * (m - 1) as f64);
    let mut value = 0.0;
    // dL/d sim, accumulated before the chain through the unit rows
    let mut g_sim = Array2::<f64>::zeros((m, m));

    for &i in anchors {
        let mut order: Vec<(f64, usize)> = (0..m)
            .filter(|&k| k != i)
            .map(|k| ((blur_levels[i] - blur_levels[k]).abs(), k))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // shifted exponentials; similarities are at most 1
        let e: Vec<f64> = order.iter().map(|&(_, k)| ((sim[[i, k]] - 1.0) / tau).exp()).collect();

        // denominators: suffix sums over tie groups
        let len = order.len();
        let mut denom = vec![0.0; len];
        let mut start = len;
        let mut acc = 0.0;
        while start > 0 {
            let mut g0 = start - 1;
            while g0 > 0 && order[g0 - 1].0 == order[start - 1].0 {
                g0 -= 1;
            }
            for idx in g0..start {
                acc += e[idx];
            }
            for d in denom.iter_mut().take(start).skip(g0) {
                *d = acc;
            }
            start = g0;
        }

        for idx in 0..len {
            value += denom[idx].ln() - e[idx].ln();
        }

        // P_k = sum over j with delta_j <= delta_k of 1/D_j
        let mut prefix = vec![0.0; len];
        let mut s = 0;
        let mut running = 0.0;
        while s < len {
            let mut g1 = s;
            while g1 + 1 < len && order[g1 + 1].0 == order[s].0 {
                g1 += 1;
            }
            for d in denom.iter().take(g1 + 1).skip(s) {
                running += 1.0 / d;
            }
            for p in prefix.iter_mut().take(g1 + 1).skip(s) {
                *p = running;
            }
            s = g1 + 1;
        }
        for idx in 0..len {
            let k = order[idx].1;
            g_sim[[i, k]] += scale * (e[idx] * prefix[idx] - 1.0) / tau;
        }
    }

    // sim = U U^T, so dL/dU = (G + G^T) U
    let g_unit = (&g_sim + &g_sim.t()).dot(&unit);
    let mut grad = Array2::zeros(embeddings.dim());
    for r in 0..m {
        let u = unit.row(r);
        let gu = g_unit.row(r);
        let radial = u.dot(&gu);
        grad.row_mut(r).assign(&((&gu - &(&u * radial)) / norms[r]));
    }
    Ok(LossGrad {
        value: value * scale,
        grad,
    })
}

/// Inputs to the student objective for one batch of `N` paired samples.
#[derive(Clone, Debug)]
pub struct BatchViews<'a> {
    /// `N x 2`, from the frozen teacher on sharp views.
    pub teacher_logits: ArrayView2<'a, f64>,
    /// `N x 2`, from the student on blurred views.
    pub student_logits: ArrayView2<'a, f64>,
    /// `N x k`
    pub teacher_features: ArrayView2<'a, f64>,
    /// `N x k`
    pub student_features: ArrayView2<'a, f64>,
    /// `M x k` embeddings for the ordinal term (unnormalized).
    pub embeddings: ArrayView2<'a, f64>,
    /// `M` severities; sharp views are 0.
    pub blur_levels: &'a [f64],
    /// Rows of `embeddings` used as anchors.
    pub anchors: &'a [usize],
    pub labels: &'a [usize],
}

/// Gradients for every input of [`BatchViews`]. Teacher-side entries are
/// identically zero.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGrads {
    pub teacher_logits: Array2<f64>,
    pub student_logits: Array2<f64>,
    pub teacher_features: Array2<f64>,
    pub student_features: Array2<f64>,
    pub embeddings: Array2<f64>,
}

/// `lambda_cls * cls + lambda_feat * feat + lambda_kd * kd + lambda_ordcon * ordcon`.
pub fn total_loss(views: &BatchViews<'_>, weights: &LossWeights) -> Result<(LossBreakdown, BatchGrads)> {
    weights.validate()?;
    let cls = focal_loss(views.student_logits, views.labels, weights.alpha_focal, weights.gamma_focal)?;
    let feat = feature_alignment_loss(views.student_features, views.teacher_features)?;
    let kd = kd_loss(views.teacher_logits, views.student_logits, weights.temperature)?;
    let ord = ordinal_contrastive_loss(views.embeddings, views.blur_levels, views.anchors, weights.tau)?;

    let total = weights.lambda_cls * cls.value
        + weights.lambda_feat * feat.value
        + weights.lambda_kd * kd.value
        + weights.lambda_ordcon * ord.value;
    let breakdown = LossBreakdown {
        cls: cls.value,
        feat: feat.value,
        kd: kd.value,
        ordcon: ord.value,
        total,
    };
    let grads = BatchGrads {
        teacher_logits: Array2::zeros(views.teacher_logits.dim()),
        student_logits: cls.grad * weights.lambda_cls + kd.grad * weights.lambda_kd,
        teacher_features: Array2::zeros(views.teacher_features.dim()),
        student_features: feat.grad * weights.lambda_feat,
        embeddings: ord.grad * weights.lambda_ordcon,
    };
    Ok((breakdown, grads))
}

/// Row-wise argmax of a logit matrix.
pub fn argmax_rows(logits: ArrayView2<f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect()
}
